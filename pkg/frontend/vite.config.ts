import { defineConfig } from "vitest/config";

// The dashboard is a pure client of the pipeline service; in dev the /v1
// prefix is proxied to it so the app works same-origin.
export default defineConfig({
  server: {
    port: 5173,
    proxy: {
      "/v1": {
        target: process.env.LABPIPE_SERVICE ?? "http://127.0.0.1:8787",
        changeOrigin: true,
      },
    },
  },
  test: {
    globalSetup: "./tests/global-setup.ts",
    testTimeout: 30000,
    hookTimeout: 60000,
  },
});
