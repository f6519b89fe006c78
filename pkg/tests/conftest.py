"""Shared fixtures: a validated profile, desk-scale runs, and corpora.

The expensive artifacts (full closed-loop runs, annotated corpora) are
session-scoped so the unit suites and the acceptance gate share one
build of each.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import pytest

from coachloop.config import EngineConfig, desk_scale
from coachloop.core.phr import validate_phr
from coachloop.core.plan import default_plan
from coachloop.evalbench import build_form_corpus, build_rep_corpus
from coachloop.reasoning import MockBackend
from coachloop.session import SessionEngine
from coachloop.simulator import ExerciserProfile, Injection, Simulator, run_closed_loop

PHR_DOC = {
    "age": 30, "sex": "female", "height_cm": 170.0, "weight_kg": 65.0,
    "met_minutes_per_week": 900.0, "fitness_category": "Active",
    "preferred_intensity": "Moderate", "goal": "endurance",
}

# The clean simulated exerciser never hurts or breaks form on its own, so
# the reference desk run injects one of each to exercise every intervention
# category. Deterministic (absolute schedule, shared seed), so the
# byte-identity check still holds across runs.
DESK_SCENARIO = (
    Injection(phase_index=1, set_index=0, offset_s=4.0, kind="pain",
              duration_s=2.0, param="Medium"),
    Injection(phase_index=2, set_index=0, offset_s=3.0, kind="form_error",
              duration_s=9.0, param="weak_peak_contraction"),
    Injection(phase_index=3, set_index=0, offset_s=5.0, kind="pain",
              duration_s=2.0, param="High"),
)


@pytest.fixture(scope="session")
def phr():
    return validate_phr(dict(PHR_DOC))


@pytest.fixture(scope="session")
def desk_cfg():
    return desk_scale(EngineConfig())


def run_desk_session(phr, cfg, cardio_s=60.0, steering=(), scenario=(),
                     log_path=None, vignette_path=None, resting_bpm=65.0):
    engine = SessionEngine(phr, default_plan(cardio_s=cardio_s), cfg,
                           MockBackend(), log_path=log_path,
                           vignette_path=vignette_path)
    sim = Simulator(ExerciserProfile(age=phr.age, resting_bpm=resting_bpm),
                    cfg.sim, scenario=scenario)
    run_closed_loop(engine, sim, steering=steering)
    engine.close()
    return engine


@dataclass(frozen=True)
class DeskRuns:
    first: SessionEngine
    second: SessionEngine
    wall_first_s: float
    wall_second_s: float
    log_path: str
    vignette_path: str


@pytest.fixture(scope="session")
def desk_runs(phr, desk_cfg, tmp_path_factory):
    """Two independent desk-scale closed-loop runs with identical seeds.

    The first run also writes its log and vignettes to disk; the second
    stays in memory, so the pair doubles as a check that file output
    never perturbs the record stream.
    """
    d = tmp_path_factory.mktemp("desk")
    log_path = str(d / "session.ndjson")
    vignette_path = str(d / "vignettes.ndjson")
    t0 = time.monotonic()
    first = run_desk_session(phr, desk_cfg, scenario=DESK_SCENARIO,
                             log_path=log_path, vignette_path=vignette_path)
    t1 = time.monotonic()
    second = run_desk_session(phr, desk_cfg, scenario=DESK_SCENARIO)
    t2 = time.monotonic()
    return DeskRuns(first, second, t1 - t0, t2 - t1, log_path, vignette_path)


@pytest.fixture(scope="session")
def rep_corpus():
    return build_rep_corpus()


@pytest.fixture(scope="session")
def form_corpus():
    return build_form_corpus()
