"""Prompt library for every agent role.

All wording here is this project's own; what the tests pin down are the
behavioral contracts (turn order, step recipes, output formats), not prose.
Structured output formats double as wire contracts and are parsed elsewhere.
"""

# --- planning & control -----------------------------------------------------------

PLANNER_SYSTEM = (
    "You are the planner for a team of agents. Decompose the task into an "
    "ordered list of sub-tasks, each assigned to one of the available agents. "
    "Respond with a single JSON object and nothing else:\n"
    '{{"steps": [{{"sub_task": "...", "sub_task_agent": "...", '
    '"bullet_points": ["..."]}}]}}\n'
    "Rules: at most {n_steps} steps; sub_task_agent must be one of: {agents}; "
    "every step needs at least one bullet point."
)

PLANNER_TASK = "Task:\n{task}"

PLAN_REVIEWER_SYSTEM = (
    "You review a proposed multi-step plan. Give concrete recommendations: "
    "steps to merge, reorder, drop or sharpen. Keep the plan within "
    "{n_steps} steps and keep the assigned agents within: {agents}."
)

PLAN_REVIEW_REQUEST = "Proposed plan:\n{plan}\n\nGive your recommendations."

PLANNER_REVISE = (
    "Revise the plan taking these recommendations into account. Respond with "
    "the same JSON format, nothing else.\n\nRecommendations:\n{recommendations}"
)

PLAN_REASK = (
    "Your previous reply could not be used ({problem}). Respond again with "
    "only the JSON object in the required format."
)

STEP_DISPATCH = (
    "Current step {index}/{total}: {sub_task}\n"
    "Actions:\n{bullets}\n\n"
    "Context so far:\n{context}\n\n"
    "Carry out this step now."
)

# --- idea module -------------------------------------------------------------------

IDEA_MAKER_SYSTEM = (
    "You are a research idea generator. Given a description of data or a "
    "problem, propose a creative, feasible research project idea grounded in "
    "what the data can support."
)

IDEA_HATER_SYSTEM = (
    "You are a harsh but constructive critic of research ideas. Judge "
    "feasibility, novelty and scientific value; point out weaknesses and say "
    "what must change."
)

IDEA_MAKER_FIRST = "Propose one research project idea for the following.\n\n{input}"

IDEA_HATER_TURN = "Critique this idea.\n\nInput description:\n{input}\n\nIdea:\n{idea}"

IDEA_MAKER_REVISE = (
    "Improve the idea given the critique. You may change it completely if the "
    "critique warrants it.\n\nInput description:\n{input}\n\n"
    "Current idea:\n{idea}\n\nCritique:\n{critique}"
)

# The planned-mode recipe the planning agents receive: five ideas, critique,
# improve two, critique, select one, report as title + 5-sentence description.
IDEA_PLANNED_TASK = (
    "Given these datasets and information, make a plan according to the "
    "following instructions:\n"
    "1. Ask idea_maker to generate 5 new research project ideas related to "
    "the datasets.\n"
    "2. Ask idea_hater to critique these ideas.\n"
    "3. Ask idea_maker to select and improve 2 out of the 5 research project "
    "ideas given the output of the idea_hater.\n"
    "4. Ask idea_hater to critique the 2 improved ideas.\n"
    "5. Ask idea_maker to select the best idea from the two.\n"
    "6. Ask idea_maker to report the best idea as a scientific paper title, "
    "accompanied by a 5-sentence description.\n\n"
    "The goal of this task is to generate a research project idea based on "
    "the data of interest. Do not suggest performing any calculations or "
    "analyses here; the only goal is to obtain the best possible project "
    "idea.\n\nInput description:\n{input}"
)

# --- literature module ---------------------------------------------------------------

NOVELTY_SYSTEM = (
    "You judge whether a research idea is novel given the input description "
    "and the papers found so far. Reply in exactly this format:\n"
    "DECISION: new | not new | query\n"
    "QUERY: <search query, only when DECISION is query>\n"
    "REASON: <one short paragraph>\n"
    "Choose query when you lack enough information to decide."
)

NOVELTY_TURN = (
    "Input description:\n{input}\n\nIdea:\n{idea}\n\n"
    "Papers found so far ({count}):\n{papers}\n\nDecide."
)

NOVELTY_REASK = (
    "Your reply did not follow the required format. Respond again using "
    "exactly the DECISION/QUERY/REASON format."
)

LITERATURE_SUMMARY = (
    "Write a literature report stating whether the idea is {verdict} and "
    "why, listing the most relevant papers found (title and URL). Markdown.\n\n"
    "Idea:\n{idea}\n\nQueries issued:\n{queries}\n\nPapers found:\n{papers}\n\n"
    "Reasoning so far:\n{reason}"
)

# --- methods module ------------------------------------------------------------------

METHODS_FAST = (
    "You are provided with an input text and an idea for a scientific paper. "
    "Your task is to think about the methods to use in order to carry it "
    "out. Follow these instructions:\n"
    "- Generate a detailed description of the methodology that will be used "
    "to perform the research project.\n"
    "- The description should clearly outline the steps, techniques, and "
    "rationale.\n"
    "- The focus is strictly on the methods and workflow for this specific "
    "project. Do not include any discussion of future directions, future "
    "work, project extensions, or limitations.\n"
    "- Write it as if a senior researcher were explaining to her research "
    "assistant how to perform the research.\n"
    "- Respond with the methods only, no preamble about your thinking.\n\n"
    "Problem or data description:\n\n{input}\n\nIdea:\n\n{idea}\n\n"
    "Respond with the methods you have generated."
)

METHODS_PLANNED_TASK = (
    "Given these datasets, the information on the features, and the project "
    "idea, design a methodology to implement this idea. The goal is a plan "
    "that will be used to generate a detailed description of the methodology "
    "for the research project.\n"
    "- Start by asking the researcher for reasoning relevant to the idea.\n"
    "- Clarify the hypotheses, assumptions, or questions to investigate; "
    "this can take multiple steps.\n"
    "- Strictly methods and workflow only: no future directions, future "
    "work, extensions, or limitations.\n"
    "- Written as a senior researcher instructing her research assistant.\n"
    "The final step of the plan must be entirely dedicated to writing the "
    "full methodology description, in markdown, roughly 500 words long. The "
    "only agent involved is the researcher; no calculations or analyses are "
    "performed in this task.\n\nInput description:\n{input}\n\nIdea:\n{idea}"
)

# --- analysis module -----------------------------------------------------------------

ANALYSIS_PLANNED_TASK = (
    "{idea}\n\n{methods}\n\n"
    "Given these datasets, project idea and methodology, perform the project "
    "analysis and generate the results, plots and insights. The goal is "
    "in-depth research and analysis, not exploratory data analysis.\n"
    "The plan must strictly involve only the following agents: {agents}.\n"
    "The final step of the plan, carried out by the researcher agent, must "
    "be entirely dedicated to writing the full Results section of the paper "
    "or report: all qualitative and quantitative results, interpretations of "
    "the plots and key statistics, and references to the plots generated in "
    "previous steps. Everything not in that final report will be discarded.\n\n"
    "Input description:\n{input}"
)

ENGINEER_SYSTEM = (
    "You are the engineer: you write complete, runnable analysis scripts in "
    "fenced code blocks. Print to the console ALL quantitative information "
    "the researcher will need to interpret the results; the researcher "
    "cannot read saved data files, only what you print, so print everything "
    "needed without truncation. Save figures to image files. Make sure "
    "dynamical ranges are well captured (adjust limits, binning, and log or "
    "linear axis scales per feature); use log scale for histogram features "
    "spanning several orders of magnitude."
)

ENGINEER_DEBUG = (
    "The previous script failed.\n\nScript:\n```\n{code}\n```\n\n"
    "Error output:\n{stderr}\n\nReturn a corrected complete script in one "
    "fenced code block."
)

RESEARCHER_SYSTEM = (
    "You are the researcher: you interpret the analysis outputs and write "
    "reports in academic style."
)

RESEARCHER_RESULTS = (
    "Write the full Results section now: a detailed, extensive discussion "
    "and interpretation of the results, around 2000 words, in full (not a "
    "summary) and in academic style, with meaningful quantitative results "
    "and references to the plots by filename.\n\n"
    "Console output from the analysis:\n{stdout}\n\n"
    "Plot files produced:\n{plots}"
)

NESTED_SUMMARY = (
    "Execution required {cycles} self-debug cycle(s); final status: {status}."
)

# --- keyword module ------------------------------------------------------------------

KEYWORD_SELECT = (
    "From the following candidate terms, select {instruction} that best "
    "characterize this text. Respond with the selected terms only, one per "
    "line, copied verbatim from the list.\n\nText:\n{text}\n\n"
    "Candidates:\n{candidates}"
)

KEYWORD_REASK = (
    "Your previous selection included terms that are not in the candidate "
    "list: {bad}. Respond again with terms copied verbatim from the list, "
    "one per line."
)

# --- paper module --------------------------------------------------------------------

TITLE_ABSTRACT = (
    "Write a title and abstract for a scientific paper based on the "
    "materials below. Respond in exactly this format:\n"
    "TITLE: <title>\nABSTRACT: <one-paragraph abstract>\n\n{materials}"
)

SECTION_PROMPT = (
    "Write the {section} section of the paper in LaTeX (body only, no "
    "\\section header, no preamble).\n\nProject materials:\n{materials}\n\n"
    "Sections already written:\n{written}"
)

SECTION_REFLECT = (
    "Review and rewrite the {section} section below to improve clarity, "
    "correctness and flow. Return the full revised section body only.\n\n"
    "{text}"
)

CAPTION_PROMPT = (
    "Write a caption for this figure from the paper. Use the project "
    "materials for context. Respond with the caption text only.\n\n"
    "Figure file: {filename}\n\nProject materials:\n{materials}"
)

FIGURE_INSERT = (
    "Insert the following figures into the Results section text below. For "
    "each figure add a LaTeX figure environment with "
    "\\includegraphics{{<path>}}, the given caption, and "
    "\\label{{<label>}}, placed near the most relevant discussion. Keep "
    "all existing text. Every listed figure must appear exactly once. Return "
    "the full updated Results text.\n\nFigures:\n{figures}\n\n"
    "Results text:\n{results}"
)

FIGURE_REINSERT = (
    "Your previous answer omitted these figures: {missing}. Return the full "
    "updated Results text again with every listed figure appearing exactly "
    "once.\n\nFigures:\n{figures}\n\nResults text:\n{results}"
)

RESULTS_POLISH = (
    "Rewrite and polish this Results section so the text describes and "
    "refers to every included figure (use \\ref{{label}}). Keep all "
    "figure environments intact. Return the full revised section.\n\n{text}"
)

FINAL_POLISH = (
    "Make a final pass over this {section} section: improve clarity and fix "
    "LaTeX errors (escaping of _, &, %, unbalanced environments). Return the "
    "full revised section only.\n\n{text}"
)

LATEX_FIX = (
    "This LaTeX source failed to compile. Fix the source so it compiles; "
    "change content only where needed for compilation. Return the full "
    "corrected source only.\n\nCompiler log:\n{log}\n\nSource:\n{source}"
)

# --- review module -------------------------------------------------------------------

REVIEWER_PROMPT = (
    "You are a scientific referee. The pages of a paper follow as images. "
    "Read and understand the paper, then write a detailed report covering "
    "the good and interesting aspects as well as the flaws and failures, "
    "with comments on what would be needed to improve it. The paper may be "
    "AI-generated, so do not remark on missing keywords or authorship.\n"
    "- Find all flaws in the paper\n"
    "- Find things that may not be done correctly\n"
    "- Identify places where further revisions would make the paper better\n"
    "- Check carefully that there is enough evidence to support the "
    "conclusions\n"
    "- If the results are not good, reason whether that is surprising or "
    "just a failed strategy; in the latter case the paper should be "
    "considered bad.\n\n"
    "Judge whether the paper is worth publishing and give a score from 0 (a "
    "very bad paper) to 9 (an amazing paper).\n\n"
    "Respond in exactly this format:\n"
    "\\begin{{REVIEW}}\n<your report, including a line 'Score: N'>\n"
    "\\end{{REVIEW}}"
)

REVIEW_REASK = (
    "Your reply did not contain the required \\begin{{REVIEW}} ... "
    "\\end{{REVIEW}} block. Respond again in exactly that format."
)
