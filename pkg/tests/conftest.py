"""Shared fixtures, including the expensive benchmark-scale runs."""

import time

import pytest

from pricelab.harness import RunConfig, run_single_trial

FULL_SCALE_TRIALS = 5
FULL_SCALE_POLICIES = ("dnn", "tdnn", "linear_kernel", "rmlp2")


def full_scale_config(policy, **overrides):
    base = dict(
        environment="quadratic_sim",
        policy=policy,
        n0=200,
        episodes=6,
        exploration_rule="tdnn" if policy == "tdnn" else "smoothness",
        trials=FULL_SCALE_TRIALS,
        seed=0,
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture(scope="session")
def full_scale():
    """Benchmark-scale traces, 5 seed-0 trials per policy, plus timings.

    Built once per session and shared by the policy comparison tests so
    the heavy runs are not repeated.
    """
    traces = {}
    seconds = {}
    for policy in FULL_SCALE_POLICIES:
        config = full_scale_config(policy)
        start = time.perf_counter()
        traces[policy] = [
            run_single_trial(config, t) for t in range(FULL_SCALE_TRIALS)
        ]
        seconds[policy] = time.perf_counter() - start
    return {"traces": traces, "seconds": seconds}
