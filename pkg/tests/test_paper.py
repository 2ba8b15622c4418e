import re

import pytest

from conftest import FlakyTypesetter
from labpipe import store
from labpipe.errors import (
    BadBibtex,
    CiteSearchDown,
    EmptySection,
    FigureDropped,
    MissingArtifact,
)
from labpipe.gateway import Completion, LlmGateway, Usage, scripted_gateway
from labpipe.keywords import VocabKind, Vocabulary
from labpipe.latex import BuiltinTypesetter, Journal
from labpipe.paper import (
    Figure,
    PaperDraft,
    PaperOptions,
    add_citations,
    batch_figures,
    compile_checkpoint,
    insert_figures,
    make_figures,
    preprocess,
    render_tex,
    validate_bibtex,
    well_formed_arxiv_id,
    write_paper,
    write_sections,
    write_title_abstract,
)
from labpipe.pdfpages import count_pages

VOCAB = Vocabulary(kind=VocabKind.AAAI_FLAT,
                   entries=["Machine Learning", "Statistics", "Simulation"])


def full_inputs(project, n_plots=0, duplicate_pairs=0):
    project.write_artifact(store.INPUT, "input text")
    project.write_artifact(store.IDEA, "idea text")
    project.write_artifact(store.METHODS, "methods text")
    project.write_artifact(store.RESULTS, "results body text")
    role = store.ArtifactRole(store.ArtifactKind.PLOT)
    for i in range(n_plots):
        project.write_artifact(role, f"plot-{i}".encode(), f"fig_{i:02d}.png")
    for i in range(duplicate_pairs):
        project.write_artifact(role, f"plot-{i}".encode(), f"dup_{i:02d}.png")
    return project


class DynamicProvider:
    """Scripted provider with handlers: (marker substring, fn(request)->text)."""

    def __init__(self, handlers):
        self.handlers = handlers
        self.captured = []

    def complete(self, request):
        self.captured.append(request)
        for marker, fn in self.handlers:
            if marker in request.text:
                return Completion(fn(request), Usage(1, 1))
        raise AssertionError(f"unhandled request: {request.text[:100]}")


def echo_after(marker):
    def fn(request):
        return request.text.split(marker, 1)[1]
    return fn


def insert_all_figures(request):
    labels = re.findall(r"label: (\S+);", request.text)
    paths = re.findall(r"- path: (\S+);", request.text)
    existing = request.text.split("Results text:\n", 1)[1]
    figs = "\n".join(
        f"\\begin{{figure}}\\includegraphics{{{p}}}"
        f"\\caption{{c}}\\label{{{l}}}\\end{{figure}}"
        for p, l in zip(paths, labels))
    return existing + "\n" + figs


def paper_handlers():
    return [
        ("Candidates:", lambda req: "Machine Learning\nStatistics"),
        ("Write a title and abstract",
         lambda req: "TITLE: A Study\nABSTRACT: We study things."),
        ("Write the Introduction", lambda req: "intro text"),
        ("Write the Methods", lambda req: "methods section text"),
        ("Write the Results", lambda req: "results section text"),
        ("Write the Conclusions", lambda req: "conclusions text"),
        ("Review and rewrite the Results", echo_after("\n\n")),
        ("Write a caption", lambda req: "a generated caption"),
        ("omitted these figures", insert_all_figures),
        ("Insert the following figures", insert_all_figures),
        ("Rewrite and polish this Results",
         echo_after("Return the full revised section.\n\n")),
        ("Make a final pass", echo_after("section only.\n\n")),
        ("failed to compile", echo_after("Source:\n")),
    ]


def dyn_gateway(handlers=None):
    provider = DynamicProvider(handlers or paper_handlers())
    gw = LlmGateway(provider=provider, sleep=lambda _s: None)
    return gw, provider


class TestPreprocess:
    def test_duplicate_plots_dropped_by_hash(self, project):
        full_inputs(project, n_plots=4, duplicate_pairs=2)  # 6 files, 2 dups
        _inputs, unique, warnings = preprocess(project)
        assert len(unique) == 4
        assert any("2 duplicated plot(s)" in w for w in warnings)

    def test_zero_plots_warns_but_proceeds(self, project):
        full_inputs(project)
        _inputs, unique, warnings = preprocess(project)
        assert unique == []
        assert any("no plots" in w for w in warnings)

    def test_missing_results_rejected(self, project):
        project.write_artifact(store.INPUT, "i")
        project.write_artifact(store.IDEA, "i")
        project.write_artifact(store.METHODS, "m")
        with pytest.raises(MissingArtifact) as err:
            preprocess(project)
        assert "results.md" in err.value.missing


class TestTitleAbstract:
    def test_parse_title_and_abstract(self, project):
        full_inputs(project)
        inputs, _, _ = preprocess(project)
        gw, _ = scripted_gateway(["TITLE: Grand Title\nABSTRACT: Short abstract."])
        title, abstract = write_title_abstract(inputs, gw)
        assert title == "Grand Title"
        assert abstract == "Short abstract."


class TestWriteSections:
    def _gateway(self):
        return dyn_gateway([
            ("Write the Introduction", lambda r: "INTRO-TEXT"),
            ("Write the Methods", lambda r: "METHODS-TEXT"),
            ("Write the Results", lambda r: "RESULTS-TEXT"),
            ("Write the Conclusions", lambda r: "CONCLUSIONS-TEXT"),
            ("Review and rewrite the Results", lambda r: "RESULTS-REFLECTED"),
        ])

    def test_order_and_prompt_containment(self, project):
        full_inputs(project)
        inputs, _, _ = preprocess(project)
        gw, provider = self._gateway()
        sections = write_sections(inputs, gw, reflect=set())
        assert list(sections) == ["Introduction", "Methods", "Results",
                                  "Conclusions"]
        texts = [r.text for r in provider.captured]
        assert "INTRO-TEXT" in texts[1]          # methods prompt has intro
        assert "METHODS-TEXT" in texts[2]        # results prompt has methods
        assert "INTRO-TEXT" in texts[3] and "RESULTS-TEXT" in texts[3]

    def test_reflection_call_counts(self, project):
        full_inputs(project)
        inputs, _, _ = preprocess(project)
        gw, provider = self._gateway()
        sections = write_sections(inputs, gw)  # default reflect={"Results"}
        assert sections["Results"] == "RESULTS-REFLECTED"
        # 4 section calls + 1 reflection
        assert len(provider.captured) == 5
        reflect_calls = [r for r in provider.captured
                         if "Review and rewrite" in r.text]
        assert len(reflect_calls) == 1

    def test_empty_section_raises(self, project):
        full_inputs(project)
        inputs, _, _ = preprocess(project)
        gw, _ = dyn_gateway([("Write the Introduction", lambda r: "   ")])
        with pytest.raises(EmptySection):
            write_sections(inputs, gw, reflect=set())


class TestFigureBatching:
    def test_15_figures_batches_7_7_1(self):
        figs = [Figure(path=f"Plots/f{i}.png", label=f"fig:f{i}")
                for i in range(15)]
        sizes = [len(b) for b in batch_figures(figs)]
        assert sizes == [7, 7, 1]

    def test_7_figures_single_batch(self):
        figs = [Figure(path=f"Plots/f{i}.png", label=f"fig:f{i}")
                for i in range(7)]
        assert [len(b) for b in batch_figures(figs)] == [7]

    def test_batch_partition_property(self):
        for n in range(0, 40):
            figs = [Figure(path=f"Plots/f{i}.png", label=f"l{i}")
                    for i in range(n)]
            batches = batch_figures(figs)
            assert all(len(b) == 7 for b in batches[:-1])
            assert sum(len(b) for b in batches) == n
            flat = [f.label for b in batches for f in b]
            assert flat == [f.label for f in figs]

    def test_insertion_requests_follow_batches(self):
        figs = [Figure(path=f"Plots/f{i:02d}.png", label=f"fig:f{i:02d}",
                       caption="c") for i in range(15)]
        gw, provider = dyn_gateway([("Insert the following figures",
                                     insert_all_figures)])
        out = insert_figures("base results", figs, gw)
        assert len(provider.captured) == 3
        for i, expected in enumerate((7, 7, 1)):
            labels = re.findall(r"label: (\S+);", provider.captured[i].text)
            assert len(labels) == expected
        for f in figs:
            assert out.count(f.label) == 1

    def test_omitted_figure_reask_then_error(self):
        figs = [Figure(path="Plots/a.png", label="fig:a", caption="c"),
                Figure(path="Plots/b.png", label="fig:b", caption="c")]

        def drop_fig_b(request):
            return "text with \\label{fig:a} only"

        gw, provider = dyn_gateway([("omitted these figures", drop_fig_b),
                                    ("Insert the following figures", drop_fig_b)])
        with pytest.raises(FigureDropped) as err:
            insert_figures("base", figs, gw)
        assert err.value.label == "fig:b"
        # one initial + one re-ask
        assert len(provider.captured) == 2
        assert "fig:b" in provider.captured[1].text

    def test_reask_recovers_dropped_figure(self):
        figs = [Figure(path="Plots/a.png", label="fig:a", caption="c")]
        replies = iter(["no figures here", "now with \\label{fig:a}"])
        gw, _ = dyn_gateway([("omitted these figures", lambda r: next(replies)),
                             ("Insert the following figures",
                              lambda r: next(replies))])
        out = insert_figures("base", figs, gw)
        assert "fig:a" in out


class TestMakeFigures:
    def test_labels_unique_for_clashing_stems(self, tmp_path):
        a = tmp_path / "plot one.png"
        b = tmp_path / "plot_one.png"
        a.write_bytes(b"a")
        b.write_bytes(b"b")
        figs = make_figures([a, b])
        assert len({f.label for f in figs}) == 2


class TestCompileCheckpoint:
    def _draft(self):
        return PaperDraft(title="T", abstract="A", keywords=["k"],
                          sections={"Introduction": "i", "Methods": "m",
                                    "Results": "r", "Conclusions": "c"})

    def test_wellformed_draft_tex_and_pdf(self, project):
        draft = self._draft()
        pdf_path, failure = compile_checkpoint(project, draft, 1,
                                               BuiltinTypesetter())
        assert failure is None
        assert project.path_for(store.paper_tex(1)).exists()
        assert pdf_path.exists()
        assert count_pages(pdf_path.read_bytes()) >= 1

    def test_failed_compile_persists_tex(self, project):
        draft = self._draft()
        ts = FlakyTypesetter(fail_versions={1})
        pdf_path, failure = compile_checkpoint(project, draft, 1, ts)
        assert pdf_path is None and "seeded failure" in failure
        assert project.path_for(store.paper_tex(1)).exists()
        assert not project.path_for(store.paper_pdf(1)).exists()

    def test_fixer_round_invoked_on_failure(self, project):
        class OnceFailingTypesetter:
            def __init__(self):
                self.calls = 0
                self._ok = BuiltinTypesetter()

            def compile(self, tex_source, workdir, jobname):
                self.calls += 1
                if self.calls == 1:
                    from labpipe.latex import CompileResult

                    return CompileResult(False, None, "Undefined control sequence")
                return self._ok.compile(tex_source, workdir, jobname)

        draft = self._draft()
        ts = OnceFailingTypesetter()
        gw, provider = dyn_gateway([
            ("failed to compile", lambda r: r.text.split("Source:\n", 1)[1]),
        ])
        pdf_path, failure = compile_checkpoint(project, draft, 1, ts, gw)
        assert ts.calls == 2
        assert failure is None and pdf_path.exists()
        fix_request = provider.captured[0]
        assert "Undefined control sequence" in fix_request.text

    def test_version_must_increase(self, project):
        draft = self._draft()
        compile_checkpoint(project, draft, 2, BuiltinTypesetter())
        with pytest.raises(ValueError):
            compile_checkpoint(project, draft, 2, BuiltinTypesetter())


class ScriptedCite:
    def __init__(self, per_section):
        self.per_section = per_section
        self.calls = 0

    def cite(self, section_text):
        self.calls += 1
        return list(self.per_section)


class ScriptedBib:
    def __init__(self, entries, malformed=()):
        self.entries = entries
        self.malformed = set(malformed)

    def fetch(self, arxiv_id):
        if arxiv_id in self.malformed:
            return "not bibtex at all {{{"
        key = arxiv_id.replace(".", "")
        return ("@article{ref" + key + ",\n  title={Title " + arxiv_id +
                "},\n  year={2024}\n}")


class TestCitations:
    def _draft(self):
        return PaperDraft(title="T", abstract="A",
                          sections={"Introduction": "One claim here.",
                                    "Methods": "We use a method.",
                                    "Results": "It works well.",
                                    "Conclusions": "The end."})

    def test_three_ids_three_entries_and_markers(self):
        draft = self._draft()
        cite = ScriptedCite([("2101.00001", None)])
        # 4 sections x 1 id, but dedup by arxiv id keeps one bib entry;
        # use distinct ids per call instead
        ids = iter([("2101.00001", None), ("2102.00002", None),
                    ("2103.00003", None), ("2101.00001", None)])

        class PerSectionCite:
            def cite(self, text):
                return [next(ids)]

        warnings = add_citations(draft, PerSectionCite(), ScriptedBib({}))
        assert warnings == []
        assert len(draft.bib) == 3
        total_markers = sum(s.count("\\cite{") for s in draft.sections.values())
        assert total_markers >= 3

    def test_marker_at_end_of_matched_sentence(self):
        draft = self._draft()
        draft.sections["Introduction"] = "First point. Second point. Third."
        cite = ScriptedCite([("2101.00001", "Second point.")])

        class OneSection:
            def cite(self, text):
                if "First point" in text:
                    return [("2101.00001", "Second point.")]
                return []

        add_citations(draft, OneSection(), ScriptedBib({}))
        intro = draft.sections["Introduction"]
        assert "Second point. \\cite{ref210100001}" in intro

    def test_malformed_bibtex_dropped_with_warning(self):
        draft = self._draft()
        ids = iter([[("2101.00001", None), ("2102.00002", None),
                     ("2103.00003", None)], [], [], []])

        class FirstSectionCite:
            def cite(self, text):
                return next(ids)

        warnings = add_citations(draft, FirstSectionCite(),
                                 ScriptedBib({}, malformed={"2102.00002"}))
        assert len(draft.bib) == 2
        assert len(warnings) == 1 and "2102.00002" in warnings[0]

    def test_cite_search_down_skips_with_warning(self):
        draft = self._draft()

        class DownCite:
            def cite(self, text):
                raise CiteSearchDown("offline")

        warnings = add_citations(draft, DownCite(), ScriptedBib({}))
        assert len(warnings) == 4  # one per section
        assert draft.bib == []

    def test_ill_formed_arxiv_id_dropped(self):
        draft = self._draft()

        class BadIdCite:
            def cite(self, text):
                return [("not-an-id!!", None)]

        warnings = add_citations(draft, BadIdCite(), ScriptedBib({}))
        assert draft.bib == []
        assert all("ill-formed" in w for w in warnings[:1])

    def test_bibtex_validation(self):
        assert validate_bibtex("x", "@article{key1, title={T}}") == "key1"
        with pytest.raises(BadBibtex):
            validate_bibtex("x", "garbage")
        with pytest.raises(BadBibtex):
            validate_bibtex("x", "@article{key1, title={T}")  # unbalanced

    def test_arxiv_id_format(self):
        assert well_formed_arxiv_id("2101.00001")
        assert well_formed_arxiv_id("2101.00001v2")
        assert well_formed_arxiv_id("astro-ph/0601001")
        assert not well_formed_arxiv_id("doi:10.1000/xyz")


class TestFullStagedRun:
    def test_checkpoints_and_conservation(self, project):
        full_inputs(project, n_plots=9)
        gw, provider = dyn_gateway()
        outcome = write_paper(project, gw, BuiltinTypesetter(),
                              options=PaperOptions(journal=Journal.APS),
                              vocabulary=VOCAB)
        assert outcome.compile_failures == {}
        # all four checkpoints + pdfs exist
        for v in (1, 2, 3, 4):
            assert project.path_for(store.paper_tex(v)).exists()
            assert project.path_for(store.paper_pdf(v)).exists()
        # figure conservation: every unique plot exactly once in v4 source
        v4 = project.read_text(store.paper_tex(4))
        for i in range(9):
            assert v4.count(f"Plots/fig_{i:02d}.png") == 1
        assert outcome.draft.version == 4
        assert outcome.draft.title == "A Study"

    def test_checkpoint_monotonicity(self, project):
        full_inputs(project, n_plots=2)
        gw, _ = dyn_gateway()
        snapshots = {}
        import labpipe.paper as paper_mod

        original = paper_mod.compile_checkpoint

        def spy(project_, draft, version, *args, **kwargs):
            out = original(project_, draft, version, *args, **kwargs)
            for v in range(1, version):
                assert project_.read_text(store.paper_tex(v)) == snapshots[v], \
                    f"v{v} mutated after v{version} work"
            snapshots[version] = project_.read_text(store.paper_tex(version))
            return out

        paper_mod.compile_checkpoint = spy
        try:
            write_paper(project, gw, BuiltinTypesetter(), vocabulary=VOCAB)
        finally:
            paper_mod.compile_checkpoint = original
        assert set(snapshots) == {1, 2, 3, 4}

    def test_one_version_compile_failure_keeps_all_texes(self, project):
        full_inputs(project, n_plots=1)
        gw, _ = dyn_gateway()
        ts = FlakyTypesetter(fail_versions={2})
        outcome = write_paper(project, gw, ts, vocabulary=VOCAB)
        assert 2 in outcome.compile_failures
        for v in (1, 2, 3, 4):
            assert project.path_for(store.paper_tex(v)).exists()
        assert not project.path_for(store.paper_pdf(2)).exists()
        assert project.path_for(store.paper_pdf(4)).exists()

    def test_citations_disabled_v3_equals_v2_content(self, project):
        full_inputs(project, n_plots=1)
        gw, _ = dyn_gateway()
        write_paper(project, gw, BuiltinTypesetter(),
                    options=PaperOptions(citations=False), vocabulary=VOCAB)
        v2 = project.read_text(store.paper_tex(2))
        v3 = project.read_text(store.paper_tex(3))
        assert v2 == v3  # same content, only the version number advanced

    def test_citations_enabled_adds_bib(self, project):
        full_inputs(project, n_plots=1)
        gw, _ = dyn_gateway()
        ids = iter([[("2101.00001", None)], [("2102.00002", None)], [], []])

        class Cite:
            def cite(self, text):
                return next(ids, [])

        outcome = write_paper(project, gw, BuiltinTypesetter(),
                              options=PaperOptions(citations=True),
                              cite_port=Cite(), bib_fetch=ScriptedBib({}),
                              vocabulary=VOCAB)
        assert len(outcome.draft.bib) == 2
        assert project.path_for(store.PAPER_BIB).exists()
        v3 = project.read_text(store.paper_tex(3))
        assert "\\bibliography{paper}" in v3
        assert "\\cite{" in v3


class TestRenderTex:
    def test_template_filled(self):
        draft = PaperDraft(title="My Title", abstract="Abs", keywords=["a", "b"],
                           sections={"Introduction": "intro"},
                           journal=Journal.GENERIC)
        tex = render_tex(draft)
        assert "\\title{My Title}" in tex
        assert "Abs" in tex
        assert "a, b" in tex
        assert "\\section{Introduction}" in tex
        assert "<<<" not in tex
