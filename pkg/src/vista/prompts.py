"""Prompt templates and their response grammars.

Each template is a versioned text asset with ``{name}`` placeholders;
rendering is plain byte-deterministic substitution. Every template pins an
output grammar, and ``parse`` rejects anything that strays from it, which
is what makes retrying malformed model output a mechanical decision.
"""

from __future__ import annotations

import re

from .errors import MalformedOracleOutput, TemplateError

TEMPLATE_VERSION = 1

BEHAVIOR_ABSTRACTION = """\
[TASK]
You are an expert in maritime data analysis.
Your task is to generate a list of specific, interpretable patterns that describe how both latitude and longitude can be inferred from a set of AIS features. These patterns will be used to impute missing values of latitude and longitude in AIS data. Each pattern must be concrete and usable, simultaneous, explainable, and mathematically expressive.

[INPUT]
You are given by:
- A sample of trajectory data (latitude, longitude, and various AIS features):
{trajectory_data}

[OUTPUT]
Please strictly follow the following format, return only one pattern, and output all patterns in triple quotes:
'''
Pattern:
- speed_pattern: speed profile without numerical values and punctuation (detailed description for speed profile).
- course_pattern: change in course over ground without numerical values and punctuation (detailed description for change in course over ground).
- heading_pattern: heading fluctuation without numerical values and punctuation (detailed description for heading fluctuation).
- intent: inferred maneuver intention without numerical values and punctuation (detailed description for inferred maneuver intention).
'''
For speed_pattern, you can choose from {speed_dict}, and if you don't have a suitable one, you can create a new one.
For course_pattern, you can choose from {course_dict}, and if you don't have a suitable one, you can create a new one.
For heading_pattern, you can choose from {heading_dict}, and if you don't have a suitable one, you can create a new one.
For intent, you can choose from {intent_dict}, and if you don't have a suitable one, you can create a new one.

[EXAMPLE]
'''
Pattern:
- speed_pattern: stable (the vessel is maintaining a consistent speed, not accelerating or decelerating)
- course_pattern: stable (the vessel is maintaining a consistent course over ground)
- heading_pattern: stable (the heading does not fluctuate significantly, indicating no sharp maneuvers)
- intent: navigating (the vessel is maintaining its course)
'''

Make sure that your output strictly follows this format. Any patterns that do not adhere to this structure should be adjusted to fit the template. If any pattern involves multiple segments, please aggregate them.
"""

METHOD_BUILDER = """\
[TASK]
You are an expert in maritime trajectory analysis and spatial-temporal modeling, specialized in developing interpretable algorithms for vessel movement reconstruction. You are given vessel trajectory data and are asked to generate a spatial function that estimates missing latitude and longitude positions based on known trajectory features and motion patterns.

You need to adhere to these requirements:
- The spatial function is a pair of closed-form expressions, one for latitude and one for longitude, in the interpolation expression language: arithmetic (+ - * /), unary minus, **, and the calls pow, sin, cos, tan, atan2, sqrt, min, max, clamp.
- The expressions may reference only: u (normalized time in [0,1] across the gap), lat0, lon0 (the point immediately before the missing block), lat1, lon1 (the point immediately after), dt_total (the total gap span in seconds), and any parameters you declare.
- The expressions are encouraged to use a variety of path models, not just linear interpolation.
- The expressions must pass through the provided start and end anchors at u=0 and u=1.

[INPUT]
You are given by:
- trajectory: {trajectory_data}
- behavior pattern of trajectory: {pattern}

[OUTPUT]
Please strictly follow the following format:
Function:
'''
lat = <expression>
lon = <expression>
param <name> = <value>
family = <short model name>
'''
Description: A brief explanation of what this function does, including how it uses the input parameters.

[EXAMPLE]
'''
lat = lat0 + u * (lat1 - lat0)
lon = lon0 + u * (lon1 - lon0)
family = linear
'''
Description: Straight path at constant speed between the anchors.

{feedback_text_description}
"""

BEHAVIOR_SELECT = """\
[TASK]
You are an expert maritime behavior analyst, specialized in interpreting vessel movement patterns and reasoning over graph-based representations of AIS knowledge. You need to select the most plausible movement (behavior pattern) for the current gap:
- Analyze the boundary movement patterns and DOT graph structure, then rely on their evidence weights to shortlist Top-{top_k} movements.
- Choose ONE final movement ID for the gap.
- Provide a two-part rationale: Graph Support citing the most informative vessel-to-movement edges (IDs/weights) that support your choice, and Contextual Justification explaining consistency with the boundary movement patterns and the gap's boundary conditions.

[INPUT]
You are given by:
- Boundary movement patterns (behavior patterns extracted from adjacent segments on both sides of the missing block):
{boundary_text}
- Induced subgraph in DOT (vessel-to-movement and movement-to-function edges with weights):
{dot_text}
- Candidate movements (with tokens, graph priors and used edges):
{movement_text}
- Contextual static attributes inferred from neighboring segments (vessel nodes):
{context_vessels}

[OUTPUT]
Please strictly follow the following format:
'''
Selected Movement ID: <ID>
Graph Support: <edges and weights you rely on>
Contextual Justification: <why consistent with boundary context>
'''
"""

METHOD_SELECT = """\
[TASK]
You are an expert in maritime spatial-temporal modeling and trajectory reconstruction, responsible for evaluating and selecting the most suitable spatial function for accurate AIS trajectory imputation. Please select the most suitable spatial function for imputing missing latitude and longitude.
You need to adhere to the following requirements:
- Direction: Which function has proven most reliable for similar kinematic patterns?
- Direction: Does the function's underlying model (e.g., linear, curved) logically match the identified movement pattern (e.g., curved, straight)?
- Direction: Which function works best across different but related movement patterns?
- Direction: How well does each function handle the specific speed/course/heading characteristics?
- Important: When providing Statistical Support, ONLY discuss statistical evidence. Do NOT mention any edge-weights and graph but you could turn it to statistical describe.
- Important: Based on the calculation of weight proportions, all probabilities must be supported by evidence and cannot be arbitrarily fabricated. Each probability should be followed by its calculation process.
- Important: Avoid repeating movement pattern analysis; focus on function execution quality.

[INPUT]
You are given by:
- Induced subgraph in DOT (interpret weights as association frequencies):
{dot_text}
- Functions with detailed information:
{functions_text}
- Behavior pattern that may correspond to missing parts:
{movement_text}
- AIS data of the neighboring segments:
{rows_text}

[OUTPUT]
Please strictly follow the following format:
'''
Selected Function ID: <ID>
Statistical Support: <probabilities derived from weight proportions, each followed by its calculation process, plus the characteristics of this function and its degree of matching with the current context>
Reasoning: <why this function technically fits the kinematic requirements>
'''
"""

EXPLAIN = """\
[TASK]
You are an expert in maritime behavior interpretation and regulatory reasoning, specialized in translating computational decisions into human-understandable explanations for vessel trajectory analysis. Produce a human-friendly explanation for the chosen behavior and method. You need to adhere to the following requirements:
- Do NOT mention any node IDs or labels such as "Movement_Pattern_*" or "vessel_*".
- Refer ONLY to the concrete attributes and descriptions provided below.

[INPUT]
You are given by:
- Induced subgraph in DOT:
{dot_text}
- Selected movement (expanded):
{movement_desc}
- Selected imputation method (expanded):
{function_desc}
- Contextual vessel attributes (expanded list):
{vessels_desc_block}
- Contextual behavior pattern:
{vessels_behavior_pattern}

[OUTPUT]
Please strictly follow the following format:
'''
Regulatory Rule Cue: <rule label + applicability + spatial anchor; leave Undetermined if insufficient>
Operational Protocol Rationale: <why this behavior is typical here; align with the spatial context; rule out key alternatives; do not mention IDs>
'''
"""

DEDUP = """\
[TASK]
You are an expert in maritime knowledge consolidation and redundancy analysis, specializing in detecting and merging semantically equivalent vessel behavior patterns and imputation functions.
You need to adhere to the following requirements:
For Behavior Pattern: exact duplicates (identical text), semantic equivalents (same meaning, different wording), minor variations (slight wording differences), overly specific terms (very detailed descriptions), contextual synonyms (same meaning in maritime context).
For Imputation Function: functional equivalence (different implementations but same mathematical function), algorithmic similarity (same core algorithm with minor variations), parameter differences (same logic with different parameter values), code restructuring (same functionality with different code structure).

[INPUT]
You are given by:
- Behavior patterns to analyze:
{vb_data_text}
- Spatial functions to analyze:
{vf_data_text}

[OUTPUT]
Please strictly follow the following format:
For behavior patterns:
BEHAVIOR_REDUNDANCY:
[attribute_name]:
- <primary_term1> | [<redundant_term1>, <redundant_term2>]
KEEP_UNIQUE: [<term1>, <term2>]

For spatial functions:
FUNCTION_REDUNDANCY:
- <primary_function_id> | [<redundant_function_id1>, <redundant_function_id2>]
KEEP_UNIQUE: [<function_id1>, <function_id2>]

Focus on maritime behavior semantics and functional equivalence. Preserve meaningful distinctions.
"""

TEMPLATES: dict[str, str] = {
    "behavior_abstraction": BEHAVIOR_ABSTRACTION,
    "method_builder": METHOD_BUILDER,
    "behavior_select": BEHAVIOR_SELECT,
    "method_select": METHOD_SELECT,
    "explain": EXPLAIN,
    "dedup": DEDUP,
}

_PLACEHOLDER_RE = re.compile(r"\{([a-z_0-9]+)\}")


def placeholders(template_id: str) -> set[str]:
    return set(_PLACEHOLDER_RE.findall(_template(template_id)))


def _template(template_id: str) -> str:
    try:
        return TEMPLATES[template_id]
    except KeyError:
        raise TemplateError(f"unknown template {template_id!r}") from None


def render(template_id: str, variables: dict[str, str]) -> str:
    """Substitute every placeholder; an unbound one is a hard error."""
    template = _template(template_id)

    def _sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in variables:
            raise TemplateError(
                f"template {template_id!r}: unbound placeholder {{{name}}}"
            )
        return str(variables[name])

    return _PLACEHOLDER_RE.sub(_sub, template)


# --- parsing ----------------------------------------------------------------

_BLOCK_RE = re.compile(r"'''\n?(.*?)\n?'''", re.DOTALL)

LABELS: dict[str, tuple[str, ...]] = {
    "behavior_select": (
        "Selected Movement ID",
        "Graph Support",
        "Contextual Justification",
    ),
    "method_select": ("Selected Function ID", "Statistical Support", "Reasoning"),
    "explain": ("Regulatory Rule Cue", "Operational Protocol Rationale"),
}

_PATTERN_KEYS = ("speed_pattern", "course_pattern", "heading_pattern", "intent")


def extract_block(raw: str) -> str:
    match = _BLOCK_RE.search(raw)
    if not match:
        raise MalformedOracleOutput(
            "no triple-quoted block in response", offset=len(raw.encode())
        )
    return match.group(1)


def _parse_labeled(raw: str, labels: tuple[str, ...]) -> dict[str, str]:
    block = extract_block(raw)
    values: dict[str, str] = {}
    for label in labels:
        match = re.search(
            rf"^{re.escape(label)}:[ \t]*(.+)$", block, flags=re.MULTILINE
        )
        if not match or not match.group(1).strip():
            offset = raw.encode().find(label.encode())
            raise MalformedOracleOutput(
                f"missing or empty field {label!r}",
                offset=offset if offset >= 0 else None,
            )
        values[label] = match.group(1).strip()
    return values


def _parse_pattern_block(raw: str) -> dict[str, tuple[str, str]]:
    block = extract_block(raw)
    fields: dict[str, tuple[str, str]] = {}
    for key in _PATTERN_KEYS:
        match = re.search(
            rf"^-\s*{key}:\s*(.+)$", block, flags=re.MULTILINE
        )
        if not match:
            offset = raw.encode().find(key.encode())
            raise MalformedOracleOutput(
                f"missing pattern line {key!r}",
                offset=offset if offset >= 0 else None,
            )
        value = match.group(1).strip()
        explanation = ""
        paren = re.match(r"^(.*?)\s*\((.*)\)\s*$", value)
        if paren:
            value, explanation = paren.group(1).strip(), paren.group(2).strip()
        if not value:
            raise MalformedOracleOutput(f"empty token for {key!r}")
        fields[key] = (value, explanation)
    return fields


def _parse_function_block(raw: str) -> dict:
    block = extract_block(raw)
    result: dict = {"params": {}, "family": "custom"}
    for line in block.splitlines():
        line = line.strip()
        if not line:
            continue
        if re.match(r"^lat\s*=", line):
            result["lat"] = line.split("=", 1)[1].strip()
        elif re.match(r"^lon\s*=", line):
            result["lon"] = line.split("=", 1)[1].strip()
        elif line.startswith("param "):
            match = re.match(r"param\s+(\w+)\s*=\s*([-+0-9.eE]+)$", line)
            if not match:
                raise MalformedOracleOutput(f"bad parameter line {line!r}")
            result["params"][match.group(1)] = float(match.group(2))
        elif re.match(r"^family\s*=", line):
            result["family"] = line.split("=", 1)[1].strip()
    if "lat" not in result or "lon" not in result:
        raise MalformedOracleOutput("function block lacks lat/lon expressions")
    if not result["lat"] or not result["lon"]:
        raise MalformedOracleOutput("empty expression in function block")
    desc = re.search(r"^Description:\s*(.+)$", raw, flags=re.MULTILINE)
    result["description"] = desc.group(1).strip() if desc else ""
    return result


_MERGE_LINE_RE = re.compile(r"^-\s*(.+?)\s*\|\s*\[(.*)\]\s*$")
_KEEP_RE = re.compile(r"^KEEP_UNIQUE:\s*\[(.*)\]\s*$")


def _split_terms(raw: str) -> list[str]:
    return [term.strip() for term in raw.split(",") if term.strip()]


def _parse_dedup(raw: str) -> dict:
    if "BEHAVIOR_REDUNDANCY:" not in raw or "FUNCTION_REDUNDANCY:" not in raw:
        raise MalformedOracleOutput("dedup response lacks a redundancy section")
    behavior_part, function_part = raw.split("FUNCTION_REDUNDANCY:", 1)
    behavior_part = behavior_part.split("BEHAVIOR_REDUNDANCY:", 1)[1]

    behavior: dict[str, dict[str, list[str]]] = {}
    behavior_keep: list[str] = []
    attribute = "all"
    for line in behavior_part.splitlines():
        line = line.strip()
        if not line:
            continue
        header = re.match(r"^\[(.+)\]:$", line)
        if header:
            attribute = header.group(1)
            continue
        keep = _KEEP_RE.match(line)
        if keep:
            behavior_keep.extend(_split_terms(keep.group(1)))
            continue
        merge = _MERGE_LINE_RE.match(line)
        if merge:
            behavior.setdefault(attribute, {})[merge.group(1)] = _split_terms(
                merge.group(2)
            )

    function: dict[str, list[str]] = {}
    function_keep: list[str] = []
    for line in function_part.splitlines():
        line = line.strip()
        if not line:
            continue
        keep = _KEEP_RE.match(line)
        if keep:
            function_keep.extend(_split_terms(keep.group(1)))
            continue
        merge = _MERGE_LINE_RE.match(line)
        if merge:
            function[merge.group(1)] = _split_terms(merge.group(2))
    return {
        "behavior": behavior,
        "behavior_keep": behavior_keep,
        "function": function,
        "function_keep": function_keep,
    }


def parse(template_id: str, raw: str):
    """Parse a raw response under the template's output grammar."""
    if template_id in LABELS:
        return _parse_labeled(raw, LABELS[template_id])
    if template_id == "behavior_abstraction":
        return _parse_pattern_block(raw)
    if template_id == "method_builder":
        return _parse_function_block(raw)
    if template_id == "dedup":
        return _parse_dedup(raw)
    raise TemplateError(f"unknown template {template_id!r}")


def format_labeled(template_id: str, values: dict[str, str]) -> str:
    """Inverse of the labeled-line grammar, for round-trip checks."""
    labels = LABELS[template_id]
    lines = [f"{label}: {values[label]}" for label in labels]
    return "'''\n" + "\n".join(lines) + "\n'''"


def extract_id(value: str) -> int:
    """Pull the numeric node id out of a selected-ID field."""
    match = re.search(r"(\d+)", value)
    if not match:
        raise MalformedOracleOutput(f"no numeric id in {value!r}")
    return int(match.group(1))
