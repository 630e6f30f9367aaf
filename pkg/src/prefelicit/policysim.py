"""Critical-care bed allocation simulator and policy feature extraction.

Candidate prioritization policies are random depth-3 scoring trees over
patient age and days waited. Each policy is simulated against a daily
arrival/survival scenario; the outcomes (life-years saved, survival and
access probabilities overall and by age band, and fairness derived from
their coefficients of variation) become the feature vectors the
elicitation engine works on.

Patient fates are pre-drawn per patient (resolution day and outcome,
waiting-death day) from a stream that does not depend on the bed count,
so runs that differ only in capacity share common random numbers.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Sequence

import numpy as np

from .engine import AlternativeSet
from .errors import DataValidationError, NumericalFailure

AGE = "age"
DAYS_WAITED = "days_waited"

N_AGE_GROUPS = 6
N_FEATURES = 16
CV_COLUMNS = (14, 15)
FEATURE_NAMES = (
    "life_years_saved",
    "overall_survival",
    "survival_18_29",
    "survival_30_39",
    "survival_40_49",
    "survival_50_59",
    "survival_60_69",
    "survival_70_plus",
    "access_18_29",
    "access_30_39",
    "access_40_49",
    "access_50_59",
    "access_60_69",
    "access_70_plus",
    "cv_survival",
    "cv_access",
)

# label -> (midpoint age, expected total lifespan conditional on reaching
# the band). Used when the age table does not override them.
DEFAULT_AGE_BANDS = {
    "18-29": (23.5, 82.0),
    "30-39": (34.5, 82.5),
    "40-49": (44.5, 83.0),
    "50-59": (54.5, 83.5),
    "60-69": (64.5, 84.5),
    "70+": (77.5, 87.0),
}


@dataclass(frozen=True)
class AgeGroup:
    label: str
    proportion: float
    recovery_prob: float
    death_prob: float
    midpoint_age: float
    life_expectancy: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.proportion <= 1.0:
            raise DataValidationError(f"proportion out of range for {self.label}")
        if self.recovery_prob < 0.0 or self.death_prob < 0.0:
            raise DataValidationError(f"negative daily probability for {self.label}")
        total = self.recovery_prob + self.death_prob
        if total > 1.0 + 1e-12:
            raise DataValidationError(
                f"daily recovery+death exceeds 1 for {self.label}"
            )
        if total <= 0.0:
            raise DataValidationError(
                f"daily recovery+death must be positive for {self.label} "
                "(otherwise stays never resolve)"
            )


@dataclass(frozen=True)
class Scenario:
    daily_arrivals: tuple[float, ...]
    age_groups: tuple[AgeGroup, ...]
    waiting_death_prob: float
    beds: int

    def __post_init__(self) -> None:
        if len(self.daily_arrivals) == 0:
            raise DataValidationError("scenario needs at least one day of arrivals")
        if any(a < 0 or not math.isfinite(a) for a in self.daily_arrivals):
            raise DataValidationError("daily arrivals must be finite and nonnegative")
        if len(self.age_groups) != N_AGE_GROUPS:
            raise DataValidationError(
                f"exactly {N_AGE_GROUPS} age groups required, got {len(self.age_groups)}"
            )
        total = sum(g.proportion for g in self.age_groups)
        if abs(total - 1.0) > 1e-9:
            raise DataValidationError(
                f"age proportions sum to {total}, expected 1"
            )
        if not 0.0 <= self.waiting_death_prob <= 1.0:
            raise DataValidationError("waiting death probability must be in [0, 1]")
        if self.beds < 1:
            raise DataValidationError("bed count must be a positive integer")


@dataclass(frozen=True)
class PolicyTree:
    """Perfect depth-3 binary scoring tree in heap order.

    ``nodes`` holds the 7 internal (feature, threshold) pairs; the
    patient goes left when their feature value is >= the threshold.
    ``leaves`` holds the 8 scores in [0, 1].
    """

    nodes: tuple[tuple[str, float], ...]
    leaves: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.nodes) != 7 or len(self.leaves) != 8:
            raise DataValidationError("tree must have exactly 7 nodes and 8 leaves")
        for feature, _ in self.nodes:
            if feature not in (AGE, DAYS_WAITED):
                raise DataValidationError(f"unknown scoring feature {feature!r}")
        if any(not 0.0 <= s <= 1.0 for s in self.leaves):
            raise DataValidationError("leaf scores must lie in [0, 1]")

    def to_json_dict(self) -> dict:
        return {
            "nodes": [[f, t] for f, t in self.nodes],
            "leaves": list(self.leaves),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PolicyTree":
        return cls(
            nodes=tuple((str(f), float(t)) for f, t in doc["nodes"]),
            leaves=tuple(float(s) for s in doc["leaves"]),
        )


@dataclass
class Patient:
    bin_index: int
    age: float
    arrival_index: int
    days_waited: int = 0
    state: str = "waiting"
    # pre-drawn fate: days in CCU until resolution, whether that
    # resolution is a recovery, and which waiting-death check is fatal
    # (None = never).
    ccu_days_remaining: int = 0
    recovers: bool = False
    fatal_wait_check: int | None = None


@dataclass(frozen=True)
class PolicyOutcomes:
    life_years_saved: float
    overall_survival: float
    survival_by_age: tuple[float, ...]
    access_by_age: tuple[float, ...]
    cv_survival: float
    cv_access: float
    arrived: int = 0
    survived: int = 0
    died_in_ccu: int = 0
    died_waiting: int = 0

    def __post_init__(self) -> None:
        probs = (self.overall_survival, *self.survival_by_age, *self.access_by_age)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise DataValidationError("probabilities must lie in [0, 1]")
        if self.cv_survival < 0.0 or self.cv_access < 0.0:
            raise DataValidationError("coefficients of variation must be nonnegative")
        if len(self.survival_by_age) != N_AGE_GROUPS or len(self.access_by_age) != N_AGE_GROUPS:
            raise DataValidationError("per-age outcome vectors must have 6 entries")

    def feature_vector(self) -> tuple[float, ...]:
        vector = (
            self.life_years_saved,
            self.overall_survival,
            *self.survival_by_age,
            *self.access_by_age,
            self.cv_survival,
            self.cv_access,
        )
        assert len(vector) == N_FEATURES
        return vector

    def to_json_dict(self) -> dict:
        return {
            "life_years_saved": self.life_years_saved,
            "overall_survival": self.overall_survival,
            "survival_by_age": list(self.survival_by_age),
            "access_by_age": list(self.access_by_age),
            "cv_survival": self.cv_survival,
            "cv_access": self.cv_access,
            "arrived": self.arrived,
            "survived": self.survived,
            "died_in_ccu": self.died_in_ccu,
            "died_waiting": self.died_waiting,
        }


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs the arrival/age tables do not carry.

    ``beds=None`` sizes the unit so peak expected demand is roughly
    twice capacity.
    """

    beds: int | None = None
    waiting_death_prob: float = 0.10
    mean_los_days: float = 7.0
    age_bands: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_AGE_BANDS)
    )


def load_scenario(
    arrivals_path, ages_path, config: ScenarioConfig | None = None
) -> Scenario:
    """Build a Scenario from the two CSV inputs.

    arrivals CSV: header ``date,count``; ages CSV: header
    ``bin,proportion,survival_rate``. Daily in-CCU resolution
    probabilities are derived so a stay lasts ``mean_los_days`` on
    average and the eventual survival probability matches the table.
    """
    config = config or ScenarioConfig()
    arrivals = _read_arrivals(arrivals_path)
    groups = _read_age_groups(ages_path, config)
    beds = config.beds
    if beds is None:
        beds = max(1, round(max(arrivals) / 2.0))
    return Scenario(
        daily_arrivals=tuple(arrivals),
        age_groups=tuple(groups),
        waiting_death_prob=config.waiting_death_prob,
        beds=beds,
    )


def _read_arrivals(path) -> list[float]:
    rows: list[float] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "count" not in reader.fieldnames:
            raise DataValidationError(f"{path}: expected header with a 'count' column")
        for lineno, row in enumerate(reader, start=2):
            raw = (row.get("count") or "").strip()
            try:
                value = float(raw)
            except ValueError:
                raise DataValidationError(
                    f"{path}:{lineno}: count {raw!r} is not a number"
                ) from None
            if value < 0:
                raise DataValidationError(f"{path}:{lineno}: negative arrival count")
            rows.append(value)
    if not rows:
        raise DataValidationError(f"{path}: no arrival rows")
    return rows


def _read_age_groups(path, config: ScenarioConfig) -> list[AgeGroup]:
    groups: list[AgeGroup] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = {"bin", "proportion", "survival_rate"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise DataValidationError(
                f"{path}: expected header with columns {sorted(needed)}"
            )
        for lineno, row in enumerate(reader, start=2):
            label = (row.get("bin") or "").strip()
            try:
                proportion = float(row["proportion"])
                survival = float(row["survival_rate"])
            except (ValueError, TypeError):
                raise DataValidationError(
                    f"{path}:{lineno}: proportion/survival_rate must be numbers"
                ) from None
            if not 0.0 <= survival <= 1.0:
                raise DataValidationError(
                    f"{path}:{lineno}: survival rate must lie in [0, 1]"
                )
            band = config.age_bands.get(label)
            if band is None:
                raise DataValidationError(
                    f"{path}:{lineno}: unknown age band {label!r}; add it to the config"
                )
            midpoint, life_expectancy = band
            groups.append(
                AgeGroup(
                    label=label,
                    proportion=proportion,
                    recovery_prob=survival / config.mean_los_days,
                    death_prob=(1.0 - survival) / config.mean_los_days,
                    midpoint_age=midpoint,
                    life_expectancy=life_expectancy,
                )
            )
    total = sum(g.proportion for g in groups)
    if groups and abs(total - 1.0) > 1e-9:
        raise DataValidationError(
            f"{path}: age proportions sum to {total}, expected 1"
        )
    if len(groups) != N_AGE_GROUPS:
        raise DataValidationError(
            f"{path}: expected {N_AGE_GROUPS} age rows, found {len(groups)}"
        )
    return groups


def default_scenario(config: ScenarioConfig | None = None) -> Scenario:
    """The bundled synthetic scenario (shaped like the real inputs)."""
    data = resources.files("prefelicit.data")
    with resources.as_file(data / "arrivals.csv") as arrivals:
        with resources.as_file(data / "age_groups.csv") as ages:
            return load_scenario(arrivals, ages, config)


@dataclass(frozen=True)
class PolicyGenConfig:
    age_range: tuple[float, float] = (18.0, 90.0)
    wait_range: tuple[float, float] = (0.0, 20.0)


def generate_policy(seed: int, config: PolicyGenConfig | None = None) -> PolicyTree:
    """Random depth-3 scoring tree: random feature and threshold at every
    branching node, random score in [0, 1] at every leaf."""
    config = config or PolicyGenConfig()
    rng = random.Random(seed)
    nodes = []
    for _ in range(7):
        feature = rng.choice((AGE, DAYS_WAITED))
        low, high = config.age_range if feature == AGE else config.wait_range
        nodes.append((feature, rng.uniform(low, high)))
    leaves = tuple(rng.random() for _ in range(8))
    return PolicyTree(nodes=tuple(nodes), leaves=leaves)


def score_patient(tree: PolicyTree, patient: Patient) -> float:
    """Walk the tree from the root; >= threshold goes left."""
    index = 0
    for _ in range(3):
        feature, threshold = tree.nodes[index]
        value = patient.age if feature == AGE else float(patient.days_waited)
        index = 2 * index + 1 if value >= threshold else 2 * index + 2
    return tree.leaves[index - 7]


def coefficient_of_variation(values: Sequence[float]) -> float:
    """Population standard deviation over the mean."""
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if mean <= 1e-12:
        raise DataValidationError("coefficient of variation undefined for mean <= 0")
    return float(arr.std() / mean)


def assignment_order(tree: PolicyTree, waiting: Sequence[Patient]) -> list[Patient]:
    """Bed-assignment priority: descending score, then longer wait, then
    arrival order."""
    return sorted(
        waiting,
        key=lambda p: (-score_patient(tree, p), -p.days_waited, p.arrival_index),
    )


_MAX_EXTRA_DAYS = 10_000


def simulate_policy(tree: PolicyTree, scenario: Scenario, seed: int) -> PolicyOutcomes:
    """Run the daily event loop for one policy.

    Order within a day: arrivals, in-CCU resolutions, waiting deaths,
    then assignment of waiting patients to free beds by descending
    score (ties: longer wait first, then arrival order). The loop ends
    when no one is waiting, no bed is occupied, and no arrivals remain.
    """
    ss = np.random.SeedSequence(seed)
    arrivals_ss, fates_ss = ss.spawn(2)
    rng_arrivals = np.random.default_rng(arrivals_ss)
    rng_fates = np.random.default_rng(fates_ss)

    groups = scenario.age_groups
    proportions = np.array([g.proportion for g in groups])
    proportions = proportions / proportions.sum()

    waiting: list[Patient] = []
    in_ccu: list[Patient] = []
    arrived = np.zeros(N_AGE_GROUPS, dtype=int)
    assigned = np.zeros(N_AGE_GROUPS, dtype=int)
    survived = np.zeros(N_AGE_GROUPS, dtype=int)
    died_in_ccu = np.zeros(N_AGE_GROUPS, dtype=int)
    died_waiting = np.zeros(N_AGE_GROUPS, dtype=int)

    horizon = len(scenario.daily_arrivals)
    arrival_counter = 0
    day = 0
    while True:
        # 1) arrivals
        expected = scenario.daily_arrivals[day] if day < horizon else 0.0
        count = int(expected)
        if rng_arrivals.random() < expected - count:
            count += 1
        if count > 0:
            bins = rng_arrivals.choice(N_AGE_GROUPS, size=count, p=proportions)
            for bin_index in bins:
                group = groups[bin_index]
                resolution = group.recovery_prob + group.death_prob
                stay = int(rng_fates.geometric(resolution))
                recovers = bool(
                    rng_fates.random() < group.recovery_prob / resolution
                )
                if scenario.waiting_death_prob > 0.0:
                    fatal = int(rng_fates.geometric(scenario.waiting_death_prob))
                else:
                    fatal = None
                waiting.append(
                    Patient(
                        bin_index=int(bin_index),
                        age=group.midpoint_age,
                        arrival_index=arrival_counter,
                        ccu_days_remaining=stay,
                        recovers=recovers,
                        fatal_wait_check=fatal,
                    )
                )
                arrived[bin_index] += 1
                arrival_counter += 1

        # 2) in-CCU resolutions free beds
        still_in: list[Patient] = []
        for patient in in_ccu:
            patient.ccu_days_remaining -= 1
            if patient.ccu_days_remaining <= 0:
                if patient.recovers:
                    patient.state = "survived"
                    survived[patient.bin_index] += 1
                else:
                    patient.state = "died_in_ccu"
                    died_in_ccu[patient.bin_index] += 1
            else:
                still_in.append(patient)
        in_ccu = still_in

        # 3) waiting deaths, independent of age
        still_waiting: list[Patient] = []
        for patient in waiting:
            if patient.fatal_wait_check is not None:
                patient.fatal_wait_check -= 1
                if patient.fatal_wait_check <= 0:
                    patient.state = "died_waiting"
                    died_waiting[patient.bin_index] += 1
                    continue
            still_waiting.append(patient)
        waiting = still_waiting

        # 4) assign free beds by descending score
        free = scenario.beds - len(in_ccu)
        if free > 0 and waiting:
            waiting = assignment_order(tree, waiting)
            admitted = waiting[:free]
            waiting = waiting[free:]
            for patient in admitted:
                patient.state = "in_ccu"
                assigned[patient.bin_index] += 1
                in_ccu.append(patient)
        assert len(in_ccu) <= scenario.beds

        for patient in waiting:
            patient.days_waited += 1
        day += 1
        if day >= horizon and not waiting and not in_ccu:
            break
        if day > horizon + _MAX_EXTRA_DAYS:
            raise NumericalFailure(
                "simulation did not drain the unit within the day cap"
            )

    total_arrived = int(arrived.sum())
    if total_arrived == 0:
        raise DataValidationError("scenario produced no patients")
    assert total_arrived == int(survived.sum() + died_in_ccu.sum() + died_waiting.sum())

    life_years = 0.0
    for bin_index, group in enumerate(groups):
        life_years += survived[bin_index] * max(
            0.0, group.life_expectancy - group.midpoint_age
        )
    # zero-arrival bands contribute probability 0 by convention
    survival_by_age = tuple(
        float(survived[b] / arrived[b]) if arrived[b] else 0.0
        for b in range(N_AGE_GROUPS)
    )
    access_by_age = tuple(
        float(assigned[b] / arrived[b]) if arrived[b] else 0.0
        for b in range(N_AGE_GROUPS)
    )
    return PolicyOutcomes(
        life_years_saved=life_years,
        overall_survival=float(survived.sum() / total_arrived),
        survival_by_age=survival_by_age,
        access_by_age=access_by_age,
        cv_survival=coefficient_of_variation(survival_by_age),
        cv_access=coefficient_of_variation(access_by_age),
        arrived=total_arrived,
        survived=int(survived.sum()),
        died_in_ccu=int(died_in_ccu.sum()),
        died_waiting=int(died_waiting.sum()),
    )


def extract_feature_matrix(outcomes: Sequence[PolicyOutcomes]) -> np.ndarray:
    if len(outcomes) < 2:
        raise DataValidationError("need at least two policies to compare")
    return np.array([o.feature_vector() for o in outcomes])


def normalize_features(
    matrix: np.ndarray,
    labels: Sequence[str] | None = None,
    cv_columns: Sequence[int] = (),
    raw_outcomes: Sequence[PolicyOutcomes] | None = None,
) -> AlternativeSet:
    """Min-max each column to [0, 1] and orient everything upward.

    Columns listed in ``cv_columns`` are dispersion measures where small
    is good; they become fairness = 1 - normalized value, so utility is
    monotone increasing in every feature. Constant columns map to 0.5.
    The flip is a one-time transform: re-normalizing an already
    normalized matrix (with no cv columns marked) is the identity.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise DataValidationError("need a matrix with at least two rows")
    cv_set = set(int(c) for c in cv_columns)
    if any(c < 0 or c >= matrix.shape[1] for c in cv_set):
        raise DataValidationError("cv column index out of range")
    out = np.empty_like(matrix)
    for col in range(matrix.shape[1]):
        column = matrix[:, col]
        span = column.max() - column.min()
        if span <= 1e-12:
            out[:, col] = 0.5
        else:
            out[:, col] = (column - column.min()) / span
        if col in cv_set:
            out[:, col] = 1.0 - out[:, col]
    display_mask = [col not in cv_set for col in range(matrix.shape[1])]
    return AlternativeSet(
        out,
        labels=labels,
        display_mask=display_mask,
        raw_outcomes=[o.to_json_dict() for o in raw_outcomes] if raw_outcomes else None,
    )


def build_policy_alternatives(
    count: int = 25,
    seed: int = 0,
    scenario: Scenario | None = None,
    gen_config: PolicyGenConfig | None = None,
) -> tuple[AlternativeSet, list[PolicyTree], list[PolicyOutcomes]]:
    """Generate ``count`` policies, simulate each, and normalize.

    Policy trees use seeds seed..seed+count-1; each simulation run uses
    the matching tree seed offset by a fixed stride so the two streams
    never collide.
    """
    scenario = scenario or default_scenario()
    trees = [generate_policy(seed + i, gen_config) for i in range(count)]
    outcomes = [
        simulate_policy(tree, scenario, seed=seed + 100_000 + i)
        for i, tree in enumerate(trees)
    ]
    matrix = extract_feature_matrix(outcomes)
    labels = [f"Policy {i}" for i in range(1, count + 1)]
    alternatives = normalize_features(
        matrix, labels=labels, cv_columns=CV_COLUMNS, raw_outcomes=outcomes
    )
    return alternatives, trees, outcomes
