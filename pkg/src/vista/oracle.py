"""Pluggable language-model interface.

Two backends sit behind the same template surface: a deterministic
rule-based stub that makes the whole pipeline runnable offline, and an
OpenAI-compatible HTTP chat client. Retries are owned by the workflow
layer; this module only raises typed errors.

Stub heuristics (documented because tests pin them):
  speed token    coefficient of variation < 0.05 -> stable; otherwise a
                 monotone drift over 10 percent of the mean -> increasing or
                 decreasing; anything else -> variable.
  course/heading unwrapped angular span < 10 degrees -> stable,
                 < 45 -> gradual, else sharp.
  intent         decreasing speed near a port or anchorage -> approaching;
                 non-stable course -> maneuvering; else navigating.
  method         family picked from the behavior tokens, parameters read
                 off the trajectory sample (turn rate from course drift,
                 decay from the speed ratio, derivatives from boundary
                 differences); refinement feedback advances to the next
                 untried family.
  selection      argmax prior with ascending-id tie break, citing the
                 subgraph edges into the chosen node.
"""

from __future__ import annotations

import math
import os
import re
import statistics
import threading
import time
from dataclasses import dataclass
from fractions import Fraction

import requests

from . import prompts
from .errors import EmptyOracleOutput, OracleTimeout, OracleUnavailable
from .functions import (
    FunctionSpec,
    constant_turn_spec,
    cubic_hermite_spec,
    decelerate_align_spec,
    linear_spec,
)

ENV_URL = "VISTA_ORACLE_URL"
ENV_KEY = "VISTA_ORACLE_KEY"
ENV_MODEL = "VISTA_ORACLE_MODEL"


@dataclass
class OracleRequest:
    template_id: str
    variables: dict[str, str]
    deterministic: bool = True


@dataclass
class OracleResponse:
    raw: str
    parsed: object
    latency_ms: float


class Oracle:
    """Routes each template to a backend and enforces the response grammar."""

    def __init__(self, backend, overrides: dict[str, object] | None = None):
        self._backend = backend
        self._overrides = overrides or {}

    def backend_for(self, template_id: str):
        return self._overrides.get(template_id, self._backend)

    def call(self, request: OracleRequest) -> OracleResponse:
        prompt = prompts.render(request.template_id, request.variables)
        backend = self.backend_for(request.template_id)
        started = time.perf_counter()
        raw = backend.complete(request, prompt)
        latency_ms = (time.perf_counter() - started) * 1000.0
        if not raw or not raw.strip():
            raise EmptyOracleOutput(f"empty response for {request.template_id}")
        parsed = prompts.parse(request.template_id, raw)
        return OracleResponse(raw=raw, parsed=parsed, latency_ms=latency_ms)

    def ask(self, template_id: str, variables: dict[str, str]):
        return self.call(OracleRequest(template_id, variables)).parsed


def call(request: OracleRequest, backend) -> OracleResponse:
    return Oracle(backend).call(request)


# --- trajectory row format shared with the stub ------------------------------


def format_rows(rows: list[dict]) -> str:
    """Render trajectory samples as 'key=value | ...' lines the stub can read."""
    lines = []
    for row in rows:
        parts = [f"{key}={value}" for key, value in row.items()]
        lines.append(" | ".join(parts))
    return "\n".join(lines)


def parse_rows(text: str) -> list[dict[str, str]]:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or "=" not in line:
            continue
        row: dict[str, str] = {}
        for part in line.split(" | "):
            if "=" in part:
                key, value = part.split("=", 1)
                row[key.strip()] = value.strip()
        rows.append(row)
    return rows


# --- the deterministic stub ---------------------------------------------------

_SYNONYMS = {
    "steady": "stable",
    "constant": "stable",
    "consistent": "stable",
    "unchanging": "stable",
    "uniform": "stable",
    "cruising": "navigating",
    "transiting": "navigating",
    "under way": "navigating",
    "turning": "maneuvering",
    "curving": "maneuvering",
    "slowing": "decreasing",
    "accelerating": "increasing",
}

_RULE_CUES = {
    "traffic-separation-scheme": (
        "traffic separation scheme lane keeping; applies inside the charted"
        " separation zone; anchored at the traffic separation scheme"
    ),
    "shipping-lane": (
        "lane discipline for marked routes; applies along the charted lane;"
        " anchored at the shipping lane"
    ),
    "anchorage": (
        "anchorage ground regulations; applies while holding inside the"
        " designated area; anchored at the anchorage"
    ),
    "port": (
        "harbor speed and approach rules; applies within port limits;"
        " anchored at the port area"
    ),
}

_FAMILY_ORDER_DEFAULT = ("linear", "cubic-hermite", "constant-turn", "decelerate-align")


def _floats(rows: list[dict], key: str) -> list[float]:
    values = []
    for row in rows:
        raw = row.get(key)
        if raw not in (None, ""):
            try:
                values.append(float(raw))
            except ValueError:
                continue
    return values


def _unwrap_degrees(angles: list[float]) -> list[float]:
    """Accumulate shortest-way steps so spans across 360 wrap correctly."""
    if not angles:
        return []
    out = [angles[0]]
    for nxt in angles[1:]:
        delta = (nxt - out[-1] + 180.0) % 360.0 - 180.0
        out.append(out[-1] + delta)
    return out


def _speed_token(values: list[float]) -> str:
    if len(values) < 2:
        return "stable"
    mean = statistics.fmean(values)
    std = statistics.pstdev(values)
    if mean == 0.0:
        return "stable" if std == 0.0 else "variable"
    if std / abs(mean) < 0.05:
        return "stable"
    diffs = [b - a for a, b in zip(values, values[1:])]
    drift = values[-1] - values[0]
    if all(d >= 0 for d in diffs) and drift > 0.10 * abs(mean):
        return "increasing"
    if all(d <= 0 for d in diffs) and -drift > 0.10 * abs(mean):
        return "decreasing"
    return "variable"


def _angle_token(values: list[float]) -> str:
    if len(values) < 2:
        return "stable"
    unwrapped = _unwrap_degrees(values)
    span = max(unwrapped) - min(unwrapped)
    if span < 10.0:
        return "stable"
    if span < 45.0:
        return "gradual"
    return "sharp"


def _parse_pattern_text(pattern: str) -> dict[str, str]:
    tokens: dict[str, str] = {}
    for part in pattern.split(" | "):
        part = part.strip()
        if " " in part:
            name, value = part.split(" ", 1)
            tokens[name] = value.strip()
    return tokens


class StubOracle:
    """Pure function of (template id, variables); no state, no network."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, request: OracleRequest, prompt: str) -> str:
        with self._lock:
            self.calls += 1
        handler = getattr(self, f"_{request.template_id}", None)
        if handler is None:
            raise EmptyOracleOutput(f"stub has no handler for {request.template_id}")
        return handler(request.variables)

    # -- behavior abstraction --

    def _behavior_abstraction(self, variables: dict[str, str]) -> str:
        rows = parse_rows(variables["trajectory_data"])
        speeds = _floats(rows, "sog")
        courses = _floats(rows, "cog")
        headings = _floats(rows, "hdg")
        speed = _speed_token(speeds)
        course = _angle_token(courses)
        heading = _angle_token(headings)
        context = rows[0].get("ctx", "") if rows else ""
        if speed == "decreasing" and context in ("port", "anchorage"):
            intent = "approaching"
        elif course != "stable":
            intent = "maneuvering"
        else:
            intent = "navigating"
        return (
            "'''\n"
            "Pattern:\n"
            f"- speed_pattern: {speed} (speed profile classified from the sample)\n"
            f"- course_pattern: {course} (course drift classified from the sample)\n"
            f"- heading_pattern: {heading} (heading fluctuation classified from the sample)\n"
            f"- intent: {intent} (derived from motion tokens and spatial context)\n"
            "'''\n"
        )

    # -- method builder --

    def _estimate_rate(self, rows: list[dict]) -> float:
        courses = _floats(rows, "cog")
        times = _floats(rows, "t")
        if len(courses) < 2 or len(times) < 2 or times[-1] == times[0]:
            return 0.0
        unwrapped = _unwrap_degrees(courses)
        return math.radians(unwrapped[-1] - unwrapped[0]) / (times[-1] - times[0])

    def _estimate_decay(self, rows: list[dict]) -> float:
        speeds = _floats(rows, "sog")
        if len(speeds) < 2 or speeds[0] <= 0:
            return 1.0
        ratio = speeds[-1] / speeds[0]
        if ratio >= 0.999:
            return 1.0
        return max(ratio, 0.05)

    def _estimate_derivatives(self, rows: list[dict]) -> tuple[float, float, float, float]:
        lats = _floats(rows, "lat")
        lons = _floats(rows, "lon")
        times = _floats(rows, "t")
        if len(lats) < 2:
            return (0.0, 0.0, 0.0, 0.0)
        dt0 = times[1] - times[0] or 1.0
        dt1 = times[-1] - times[-2] or 1.0
        return (
            (lats[1] - lats[0]) / dt0,
            (lons[1] - lons[0]) / dt0,
            (lats[-1] - lats[-2]) / dt1,
            (lons[-1] - lons[-2]) / dt1,
        )

    def _build_family(self, family: str, rows: list[dict]) -> FunctionSpec:
        if family == "linear":
            return linear_spec()
        if family == "constant-turn":
            return constant_turn_spec(self._estimate_rate(rows))
        if family == "decelerate-align":
            return decelerate_align_spec(
                self._estimate_rate(rows), self._estimate_decay(rows)
            )
        dlat0, dlon0, dlat1, dlon1 = self._estimate_derivatives(rows)
        return cubic_hermite_spec(dlat0, dlon0, dlat1, dlon1)

    def _method_builder(self, variables: dict[str, str]) -> str:
        rows = parse_rows(variables["trajectory_data"])
        tokens = _parse_pattern_text(variables.get("pattern", ""))
        course = tokens.get("course", "stable")
        speed = tokens.get("speed", "stable")
        if course != "stable" and speed == "decreasing":
            order = ["decelerate-align", "constant-turn", "cubic-hermite", "linear"]
        elif course != "stable":
            order = ["constant-turn", "decelerate-align", "cubic-hermite", "linear"]
        elif speed == "decreasing":
            order = ["decelerate-align", "linear", "cubic-hermite", "constant-turn"]
        else:
            order = list(_FAMILY_ORDER_DEFAULT)
        feedback = variables.get("feedback_text_description", "")
        tried_match = re.search(r"tried families:\s*(.+)$", feedback, re.MULTILINE)
        tried = (
            {name.strip() for name in tried_match.group(1).split(",")}
            if tried_match
            else set()
        )
        family = next((name for name in order if name not in tried), order[0])
        spec = self._build_family(family, rows)
        lines = [f"lat = {spec.lat_expr}", f"lon = {spec.lon_expr}"]
        for name, value in spec.params:
            lines.append(f"param {name} = {value!r}")
        lines.append(f"family = {spec.family}")
        description = (
            f"{spec.family} path anchored at the gap boundaries; assumes the"
            f" {course} course and {speed} speed profile continues across the"
            " gap; parameters are per-second quantities estimated from the sample."
        )
        return "Function:\n'''\n" + "\n".join(lines) + f"\n'''\nDescription: {description}\n"

    # -- selection --

    @staticmethod
    def _pick_candidate(text: str, prefix: str) -> int:
        pattern = re.compile(
            rf"{prefix}_(\d+):.*?prior=[0-9.eE+-]+ \(= (\d+)/(\d+)\)"
        )
        candidates: list[tuple[int, Fraction]] = []
        for match in pattern.finditer(text):
            node_id = int(match.group(1))
            prior = Fraction(int(match.group(2)), int(match.group(3)))
            candidates.append((node_id, prior))
        if not candidates:
            raise EmptyOracleOutput(f"no {prefix} candidates offered")
        best = min(candidates, key=lambda item: (-item[1], item[0]))
        return best[0]

    @staticmethod
    def _support_edges(dot_text: str, dst: int) -> str:
        edges = re.findall(r"(\d+) -> (\d+) \[label=\"w=(\d+)\"\]", dot_text)
        cited = [
            f"({src}->{d},w={weight})" for src, d, weight in edges if int(d) == dst
        ]
        return "; ".join(cited) if cited else "(no incident edges)"

    def _behavior_select(self, variables: dict[str, str]) -> str:
        selected = self._pick_candidate(variables["movement_text"], "Movement_Pattern")
        support = self._support_edges(variables["dot_text"], selected)
        boundary = variables.get("boundary_text", "").strip().replace("\n", "; ")
        justification = (
            "highest graph-prior candidate; its token profile is consistent"
            f" with the boundary patterns ({boundary or 'no boundary context'})"
        )
        return (
            "'''\n"
            f"Selected Movement ID: {selected}\n"
            f"Graph Support: {support}\n"
            f"Contextual Justification: {justification}\n"
            "'''\n"
        )

    def _method_select(self, variables: dict[str, str]) -> str:
        functions_text = variables["functions_text"]
        selected = self._pick_candidate(functions_text, "Function")
        entries = re.findall(
            r"Function_(\d+): family=([\w-]+) \| weight=(\d+)", functions_text
        )
        weights = {int(fid): int(weight) for fid, _fam, weight in entries}
        families = {int(fid): fam for fid, fam, _weight in entries}
        total = sum(weight + 1 for weight in weights.values())
        chosen_weight = weights.get(selected, 0)
        denominator = "+".join(
            f"({weights[fid]}+1)" for fid in sorted(weights)
        )
        probability = Fraction(chosen_weight + 1, total)
        support = (
            f"probability {probability} = ({chosen_weight}+1)/({denominator}) that"
            " this method resolves gaps showing the selected movement pattern,"
            " computed from observed reconstruction frequencies; the"
            f" {families.get(selected, 'selected')} model matches the sampled"
            " kinematics."
        )
        reasoning = (
            f"the {families.get(selected, 'selected')} model reproduces the"
            " boundary-anchored geometry implied by the movement pattern"
        )
        return (
            "'''\n"
            f"Selected Function ID: {selected}\n"
            f"Statistical Support: {support}\n"
            f"Reasoning: {reasoning}\n"
            "'''\n"
        )

    def _explain(self, variables: dict[str, str]) -> str:
        desc_block = variables.get("vessels_desc_block", "")
        context_match = re.search(r"spatial_context=([\w-]+)", desc_block)
        context = context_match.group(1) if context_match else "open-water"
        cue = _RULE_CUES.get(context, "Undetermined")
        movement = variables.get("movement_desc", "").strip() or "the selected movement"
        rationale = (
            f"in this {context} setting, vessels of the described profile"
            f" typically continue {movement}; the reconstruction follows the"
            " routine transit procedure rather than an evasive maneuver or"
            " drifting stop."
        )
        return (
            "'''\n"
            f"Regulatory Rule Cue: {cue}\n"
            f"Operational Protocol Rationale: {rationale}\n"
            "'''\n"
        )

    # -- de-redundancy --

    def _dedup(self, variables: dict[str, str]) -> str:
        behavior_lines = []
        keep: list[str] = []
        for line in variables.get("vb_data_text", "").splitlines():
            match = re.match(r"^\[(\w+)\]:\s*(.*)$", line.strip())
            if not match:
                continue
            attribute, raw_terms = match.groups()
            terms = [term.strip() for term in raw_terms.split(",") if term.strip()]
            groups: dict[str, list[str]] = {}
            for term in terms:
                groups.setdefault(_SYNONYMS.get(term, term), []).append(term)
            section = [f"[{attribute}]:"]
            for canonical in sorted(groups):
                members = groups[canonical]
                if len(members) == 1 and members[0] == canonical:
                    keep.append(canonical)
                    continue
                # Prefer the canonical form when it was offered; otherwise the
                # lexicographically first member keeps the class deterministic.
                primary = canonical if canonical in members else sorted(members)[0]
                redundant = sorted(set(members) - {primary})
                if redundant:
                    section.append(f"- {primary} | [{', '.join(redundant)}]")
                else:
                    keep.append(primary)
            if len(section) > 1:
                behavior_lines.extend(section)
        function_ids = re.findall(
            r"^(F\d+):", variables.get("vf_data_text", ""), re.MULTILINE
        )
        lines = ["BEHAVIOR_REDUNDANCY:"]
        lines.extend(behavior_lines)
        lines.append(f"KEEP_UNIQUE: [{', '.join(sorted(set(keep)))}]")
        lines.append("FUNCTION_REDUNDANCY:")
        lines.append(f"KEEP_UNIQUE: [{', '.join(function_ids)}]")
        return "\n".join(lines) + "\n"


class HttpOracle:
    """OpenAI-compatible chat-completions client.

    Endpoint, credentials and model come from arguments or the
    VISTA_ORACLE_URL / VISTA_ORACLE_KEY / VISTA_ORACLE_MODEL environment
    variables. ``extra`` is passed through in the request body untouched
    (e.g. vendor thinking-mode switches).
    """

    def __init__(
        self,
        url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        *,
        timeout_s: float = 60.0,
        max_in_flight: int = 8,
        extra: dict | None = None,
        session: requests.Session | None = None,
    ):
        self.url = url or os.environ.get(ENV_URL, "")
        self.api_key = api_key or os.environ.get(ENV_KEY, "")
        self.model = model or os.environ.get(ENV_MODEL, "")
        if not self.url:
            raise OracleUnavailable(f"no oracle endpoint configured ({ENV_URL})")
        self.timeout_s = timeout_s
        self.extra = extra or {}
        self._session = session or requests.Session()
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def complete(self, request: OracleRequest, prompt: str) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            **self.extra,
        }
        if request.deterministic:
            body.setdefault("temperature", 0)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        with self._slots:
            try:
                response = self._session.post(
                    f"{self.url.rstrip('/')}/chat/completions",
                    json=body,
                    headers=headers,
                    timeout=self.timeout_s,
                )
                response.raise_for_status()
                payload = response.json()
            except requests.Timeout as exc:
                raise OracleTimeout(f"oracle call timed out: {exc}") from exc
            except (requests.RequestException, ValueError) as exc:
                raise OracleUnavailable(f"oracle call failed: {exc}") from exc
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise OracleUnavailable(f"unexpected response shape: {exc}") from exc
