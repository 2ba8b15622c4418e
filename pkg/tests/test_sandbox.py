import os
import time

import pytest
from hypothesis import given, settings, strategies as st

from labpipe.errors import SandboxTimeout, SpawnError
from labpipe.sandbox import (
    SandboxPolicy,
    execute_script,
    extract_code_blocks,
    missing_package,
    run_install,
)


@pytest.fixture
def policy(tmp_path):
    work = tmp_path / "proj" / "workspace"
    work.mkdir(parents=True)
    return SandboxPolicy(workdir=work, time_limit=10.0)


class TestExecuteScript:
    def test_hello_stdout_exact(self, policy):
        result = execute_script('print("hello")', policy)
        assert result.exit_status == 0
        assert result.stdout == "hello\n"
        assert result.stderr == ""
        assert result.wall_time > 0

    def test_new_files_detected(self, policy):
        code = 'open("fig1.png", "wb").write(b"PNG")\nprint("OK")'
        result = execute_script(code, policy)
        assert result.ok
        assert [p.name for p in result.new_files] == ["fig1.png"]
        assert [p.name for p in result.new_images] == ["fig1.png"]

    def test_stdout_not_truncated(self, policy):
        result = execute_script("print('x' * 100000)", policy)
        assert len(result.stdout) == 100001

    def test_nonzero_exit_with_stderr(self, policy):
        result = execute_script("raise ValueError('broken')", policy)
        assert result.exit_status != 0
        assert "ValueError: broken" in result.stderr

    def test_empty_script_rejected(self, policy):
        with pytest.raises(ValueError):
            execute_script("   \n", policy)

    def test_timeout_kills_process_tree(self, tmp_path):
        work = tmp_path / "w"
        work.mkdir()
        policy = SandboxPolicy(workdir=work, time_limit=2.0)
        code = (
            "import os, sys, time\n"
            "open('child.pid', 'w').write(str(os.getpid()))\n"
            "sys.stdout.flush()\n"
            "while True: time.sleep(0.1)\n"
        )
        start = time.monotonic()
        with pytest.raises(SandboxTimeout):
            execute_script(code, policy)
        assert time.monotonic() - start < 8
        pid_file = work / "child.pid"
        if pid_file.exists():
            pid = int(pid_file.read_text())
            time.sleep(0.1)
            with pytest.raises(ProcessLookupError):
                os.kill(pid, 0)  # no orphan survives

    def test_escape_write_excluded_and_flagged(self, policy):
        code = 'open("../escape.txt", "w").write("leak")\nprint("done")'
        result = execute_script(code, policy)
        assert result.ok
        assert result.new_files == []  # nothing inside the sandbox
        assert any("escape.txt" in w for w in result.warnings)
        assert any("policy violation" in w for w in result.warnings)

    def test_spawn_error_for_bad_interpreter(self, tmp_path):
        work = tmp_path / "w"
        work.mkdir()
        policy = SandboxPolicy(workdir=work,
                               interpreter_cmd=("/no/such/binary", "{script}"))
        with pytest.raises(SpawnError):
            execute_script("print(1)", policy)

    def test_infinite_time_limit_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            SandboxPolicy(workdir=tmp_path, time_limit=float("inf"))


class TestMissingPackage:
    def test_module_not_found(self):
        stderr = ("Traceback (most recent call last):\n"
                  '  File "t.py", line 1, in <module>\n'
                  "ModuleNotFoundError: No module named 'seaborn'\n")
        assert missing_package(stderr) == "seaborn"

    def test_dotted_module_maps_to_top_level(self):
        assert missing_package(
            "ImportError: No module named sklearn.linear_model") == "sklearn"

    def test_other_errors_are_not_packages(self):
        assert missing_package("ValueError: bad value") is None


class TestRunInstall:
    def test_install_cmd_template_expansion(self, tmp_path):
        log = tmp_path / "calls.log"
        policy = SandboxPolicy(
            workdir=tmp_path,
            install_cmd=("bash", "-c", f'echo "install {{package}}" >> {log}'))
        result = run_install("seaborn", policy)
        assert result.ok
        assert log.read_text().strip() == "install {package}".replace(
            "{package}", "seaborn")


class TestExtractCodeBlocks:
    def test_two_fences_in_order(self):
        text = "intro\n```python\na = 1\n```\nmiddle\n```\nb = 2\n```\nend"
        assert extract_code_blocks(text) == ["a = 1", "b = 2"]

    def test_no_fences_empty(self):
        assert extract_code_blocks("no code here") == []

    def test_unclosed_fence_runs_to_end(self):
        assert extract_code_blocks("```py\nx = 1\ny = 2") == ["x = 1\ny = 2"]

    def test_language_tags_ignored(self):
        assert extract_code_blocks("```bash\nls\n```") == ["ls"]

    @settings(max_examples=200, deadline=None)
    @given(blocks=st.lists(
        st.lists(st.text(alphabet=st.characters(
            blacklist_characters="`", blacklist_categories=("Cs", "Cc")),
            max_size=20).filter(lambda s: not s.strip().startswith("```")),
            max_size=4),
        max_size=4),
        prose=st.text(alphabet="abc \n", max_size=20))
    def test_roundtrip_generated_corpus(self, blocks, prose):
        """Oracle: any embedded fenced corpus extracts to exactly its blocks."""
        parts = [prose]
        expected = []
        for lines in blocks:
            body = "\n".join(lines)
            expected.append(body)
            parts.append(f"```python\n{body}\n```")
            parts.append(prose)
        text = "\n".join(parts)
        assert extract_code_blocks(text) == expected
