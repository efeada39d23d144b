"""Usability (SUS) scoring and experience-weighted aggregation.

SUS: with 10 answers on a 1..5 scale, X = (sum of odd-numbered answers)-5
and Y = 25-(sum of even-numbered answers); the score is (X+Y)*2.5, in
[0, 100].  Utility is the plain mean of 4 answers on the same scale.

Cohort weighting: each expert gets W = (YE/sum(YE) + PT/sum(PT)) / 2 from
years of experience and patients treated, so the weights sum to exactly 1
and weighted totals are convex combinations of the per-expert scores.  All
arithmetic runs in full precision; rounding happens only in rendering.

Verdict bands (documented convention for the overlapping published
boundaries): >= 80.3 Excellent; exactly 68 Okay; (68, 80.3) Good;
(51, 68) Poor; <= 51 Awful.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

__all__ = [
    "SusResponse", "UtilityResponse", "ExpertProfile", "ExpertRow",
    "ExpertScore", "EvalReport", "sus_score", "utility_average",
    "expert_weights", "weighted_totals", "verdict_band",
    "load_responses_csv", "score_cohort", "render_report_text",
    "render_report_csv",
]

_CSV_HEADER = ("id,years_experience,patients_treated,"
               "q1,q2,q3,q4,q5,q6,q7,q8,q9,q10,u11,u12,u13,u14")


def _check_likert(answers, n, what):
    answers = tuple(int(a) for a in answers)
    if len(answers) != n:
        raise ValueError(f"{what} needs exactly {n} answers, got {len(answers)}")
    for i, a in enumerate(answers, start=1):
        if not (1 <= a <= 5):
            raise ValueError(f"{what} answer {i} out of range [1,5]: {a}")
    return answers


@dataclass(frozen=True)
class SusResponse:
    answers: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "answers",
                           _check_likert(self.answers, 10, "usability"))


@dataclass(frozen=True)
class UtilityResponse:
    answers: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "answers",
                           _check_likert(self.answers, 4, "utility"))


@dataclass(frozen=True)
class ExpertProfile:
    id: str
    years_experience: float
    patients_treated: int

    def __post_init__(self):
        if self.years_experience < 0 or self.patients_treated < 0:
            raise ValueError("experience and patients treated must be >= 0")


@dataclass(frozen=True)
class ExpertRow:
    profile: ExpertProfile
    sus: SusResponse
    utility: UtilityResponse


@dataclass(frozen=True)
class ExpertScore:
    id: str
    sus_score: float
    avg_utility: float
    weight: float
    weighted_usability: float
    weighted_utility: float


@dataclass
class EvalReport:
    per_expert: list[ExpertScore]
    total_weighted_usability: float
    total_weighted_utility: float
    verdict: str


def sus_score(response: SusResponse) -> float:
    a = response.answers
    x = sum(a[i] for i in (0, 2, 4, 6, 8)) - 5
    y = 25 - sum(a[i] for i in (1, 3, 5, 7, 9))
    return (x + y) * 2.5


def utility_average(response: UtilityResponse) -> float:
    return sum(response.answers) / len(response.answers)


def expert_weights(profiles: list[ExpertProfile]) -> list[float]:
    """W_i = (YE_i/sum(YE) + PT_i/sum(PT)) / 2; weights sum to 1."""
    if not profiles:
        raise ValueError("no expert profiles")
    total_ye = sum(p.years_experience for p in profiles)
    total_pt = sum(p.patients_treated for p in profiles)
    if total_ye <= 0 or total_pt <= 0:
        raise ValueError("cohort totals of experience and patients must be positive")
    return [(p.years_experience / total_ye + p.patients_treated / total_pt) / 2.0
            for p in profiles]


def verdict_band(score: float) -> str:
    if score >= 80.3:
        return "Excellent"
    if score == 68:
        return "Okay"
    if score > 68:
        return "Good"
    if score > 51:
        return "Poor"
    return "Awful"


def weighted_totals(sus_scores: list[float], utility_avgs: list[float],
                    weights: list[float],
                    ids: list[str] | None = None) -> EvalReport:
    if not (len(sus_scores) == len(utility_avgs) == len(weights)):
        raise ValueError(
            f"length mismatch: {len(sus_scores)} SUS scores, "
            f"{len(utility_avgs)} utility averages, {len(weights)} weights")
    if ids is None:
        ids = [f"E{i + 1}" for i in range(len(weights))]
    per_expert = [
        ExpertScore(id=ids[i], sus_score=sus_scores[i],
                    avg_utility=utility_avgs[i], weight=weights[i],
                    weighted_usability=weights[i] * sus_scores[i],
                    weighted_utility=weights[i] * utility_avgs[i])
        for i in range(len(weights))
    ]
    total_u = sum(e.weighted_usability for e in per_expert)
    total_t = sum(e.weighted_utility for e in per_expert)
    return EvalReport(per_expert, total_u, total_t, verdict_band(total_u))


def score_cohort(rows: list[ExpertRow]) -> EvalReport:
    weights = expert_weights([r.profile for r in rows])
    return weighted_totals([sus_score(r.sus) for r in rows],
                           [utility_average(r.utility) for r in rows],
                           weights, ids=[r.profile.id for r in rows])


def load_responses_csv(path) -> list[ExpertRow]:
    """One expert per row: id, YE, PT, 10 usability answers, 4 utility answers."""
    rows: list[ExpertRow] = []
    for lineno, raw in enumerate(Path(path).read_text("utf-8").splitlines(),
                                 start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line == _CSV_HEADER:
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != 17:
            raise ValueError(f"{path}:{lineno}: expected 17 columns, got {len(cells)}")
        try:
            profile = ExpertProfile(cells[0], float(cells[1]), int(cells[2]))
            sus = SusResponse(tuple(int(c) for c in cells[3:13]))
            utility = UtilityResponse(tuple(int(c) for c in cells[13:17]))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        rows.append(ExpertRow(profile, sus, utility))
    if not rows:
        raise ValueError(f"{path}: no expert rows")
    return rows


def render_report_text(report: EvalReport) -> str:
    headers = ["Expert", "SUS", "W", "W usability", "AVG utility", "W utility"]
    body = [[e.id, f"{e.sus_score:g}", f"{e.weight:.2f}",
             f"{e.weighted_usability:.2f}", f"{e.avg_utility:g}",
             f"{e.weighted_utility:.2f}"] for e in report.per_expert]
    widths = [max(len(h), *(len(r[i]) for r in body)) for i, h in enumerate(headers)]
    out = io.StringIO()
    out.write("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip() + "\n")
    for r in body:
        out.write("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))).rstrip() + "\n")
    out.write(f"Total weighted usability: {report.total_weighted_usability:.1f} "
              f"({report.verdict})\n")
    out.write(f"Total weighted utility: {report.total_weighted_utility:.2f}\n")
    return out.getvalue()


def render_report_csv(report: EvalReport) -> str:
    lines = ["id,sus_score,weight,weighted_usability,avg_utility,weighted_utility"]
    for e in report.per_expert:
        lines.append(f"{e.id},{e.sus_score:g},{e.weight:.6g},"
                     f"{e.weighted_usability:.6g},{e.avg_utility:g},"
                     f"{e.weighted_utility:.6g}")
    lines.append(f"TOTAL,,,{report.total_weighted_usability:.6g},,"
                 f"{report.total_weighted_utility:.6g}")
    return "\n".join(lines) + "\n"
