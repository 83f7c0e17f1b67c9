"""Monte-Carlo power and level studies over the model registry.

Replicate ``k`` at parameter index ``j`` draws its data from
``SeedSequence(seed, spawn_key=(j, k, 0))`` and simulates its own null with
an integer seed derived from ``SeedSequence(seed, spawn_key=(j, k, 1))``, so
replicates are independent and results do not depend on scheduling.
"""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from typing import Callable, Sequence, TextIO

import numpy as np

from .core import BlockedSample
from .inference import test_joint, test_pairwise_aggregate, test_subset
from .models import (
    KonijnSpec,
    MixtureSpec,
    gen_cauchy_regression,
    gen_gaussian_cov,
    gen_konijn,
    gen_mixture,
    gen_null_setting,
    gen_sign_model,
    gen_sine_dependence,
)

__all__ = [
    "MODELS",
    "TESTS",
    "SIGN_MODEL_DIM",
    "ModelInfo",
    "PowerRow",
    "generate",
    "replicate_pvalues",
    "power_curve",
    "rows_to_csv",
]

# Coordinates per block in the sign model; the sign flip acts on the last one.
SIGN_MODEL_DIM = 3


@dataclass(frozen=True)
class ModelInfo:
    generator: Callable[[int, float, object], BlockedSample]
    param_name: str
    default_grid: tuple
    description: str


def _konijn(base: str):
    # The parameter is the local strength h; the mixing weight is h / sqrt(n).
    def gen(n, h, seed):
        return gen_konijn(n, KonijnSpec.local(float(h), n, base=base), seed)

    return gen


def _sign(marginal: str):
    def gen(n, d, seed):
        return gen_sign_model(n, int(d), marginal, seed)

    return gen


def _null(setting: str):
    def gen(n, _param, seed):
        return gen_null_setting(n, setting, seed)

    return gen


def _mixture(n, delta, seed):
    return gen_mixture(n, MixtureSpec(delta=float(delta), block_dims=(2, 2, 2)), seed)


MODELS: dict[str, ModelInfo] = {
    "null-gaussian": ModelInfo(_null("gaussian"), "unused", (0,), "three independent N(0, I_3) blocks"),
    "null-copula3": ModelInfo(_null("copula3"), "unused", (0,), "three independent N(0,1)^3 blocks"),
    "null-cauchy": ModelInfo(_null("cauchy"), "unused", (0,), "three independent Cauchy blocks"),
    "gaussian-ar": ModelInfo(
        lambda n, rho, seed: gen_gaussian_cov(n, 9, "ar", float(rho), seed=seed),
        "rho",
        (0.0, 0.05, 0.1, 0.15, 0.2, 0.25),
        "N_9(0, rho^|i-j|) split 3+3+3",
    ),
    "gaussian-banded": ModelInfo(
        lambda n, rho, seed: gen_gaussian_cov(n, 9, "banded", float(rho), seed=seed),
        "rho",
        (0.0, 0.05, 0.1, 0.15, 0.2, 0.25),
        "N_9 with bandwidth-2 covariance split 3+3+3",
    ),
    "cauchy-regression": ModelInfo(
        lambda n, a, seed: gen_cauchy_regression(n, float(a), seed),
        "a",
        (0.2, 0.4, 0.6, 0.8, 1.0),
        "Cauchy blocks plus a shared Cauchy term",
    ),
    "sine": ModelInfo(
        lambda n, b, seed: gen_sine_dependence(n, float(b), seed),
        "b",
        (0.1, 0.2, 0.3, 0.4, 0.5),
        "Cauchy blocks plus shared sin(b W)",
    ),
    "konijn-gaussian": ModelInfo(
        _konijn("gaussian"), "h", (0.0, 0.4, 0.8, 1.2, 1.6), "Konijn mixing of Gaussian pairs, delta = h / sqrt(n)"
    ),
    "konijn-copula": ModelInfo(
        _konijn("copula"), "h", (0.0, 0.1, 0.2, 0.3, 0.4), "Konijn mixing of cubed Gaussian pairs, delta = h / sqrt(n)"
    ),
    "konijn-t": ModelInfo(
        _konijn("t"), "h", (0.0, 0.25, 0.5, 0.75, 1.0), "Konijn mixing of t_5 pairs, delta = h / sqrt(n)"
    ),
    "mixture": ModelInfo(
        _mixture, "delta", (0.0, 0.1, 0.2, 0.3, 0.4), "per-row mixture with a fully coupled law"
    ),
    "sign-gaussian": ModelInfo(_sign("gaussian"), "d", (SIGN_MODEL_DIM,), "sign model, N(0,1)"),
    "sign-t3": ModelInfo(_sign("t3"), "d", (SIGN_MODEL_DIM,), "sign model, t_3"),
    "sign-t2": ModelInfo(_sign("t2"), "d", (SIGN_MODEL_DIM,), "sign model, t_2"),
    "sign-cauchy": ModelInfo(_sign("cauchy"), "d", (SIGN_MODEL_DIM,), "sign model, Cauchy"),
}

TESTS = ("joint", "pairwise", "higher-order")


def generate(model: str, n: int, param: float, seed=0) -> BlockedSample:
    try:
        info = MODELS[model]
    except KeyError:
        raise ValueError(f"unknown model {model!r}; choose from {sorted(MODELS)}") from None
    return info.generator(n, param, seed)


def _seeds(seed: int, j: int, k: int):
    data = np.random.SeedSequence(seed, spawn_key=(j, k, 0))
    null = int(np.random.SeedSequence(seed, spawn_key=(j, k, 1)).generate_state(1)[0])
    return data, null


def _run_test(test: str, sample: BlockedSample, alpha: float, B: int, seed: int) -> float:
    if test == "joint":
        return test_joint(sample, alpha=alpha, B=B, seed=seed).p_value
    if test == "pairwise":
        return test_pairwise_aggregate(sample, alpha=alpha, B=B, seed=seed).p_value
    if test == "higher-order":
        return test_subset(sample, range(sample.r), alpha=alpha, B=B, seed=seed).p_value
    raise ValueError(f"unknown test {test!r}; choose from {TESTS}")


def _one_replicate(args) -> list[float]:
    model, n, param, tests, alpha, B, seed, j, k = args
    data_seed, null_seed = _seeds(seed, j, k)
    sample = generate(model, n, param, data_seed)
    return [_run_test(t, sample, alpha, B, null_seed) for t in tests]


def replicate_pvalues(
    model: str,
    n: int,
    param: float,
    reps: int,
    tests: Sequence[str] = ("joint",),
    alpha: float = 0.05,
    B: int = 199,
    seed: int = 0,
    param_index: int = 0,
    workers: int = 1,
) -> np.ndarray:
    """P-values of shape ``(reps, len(tests))``; each replicate has its own null."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {sorted(MODELS)}")
    for t in tests:
        if t not in TESTS:
            raise ValueError(f"unknown test {t!r}; choose from {TESTS}")
    jobs = [(model, n, param, tuple(tests), alpha, B, seed, param_index, k) for k in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_one_replicate, jobs, chunksize=max(1, reps // (4 * workers))))
    else:
        out = [_one_replicate(job) for job in jobs]
    return np.array(out, dtype=float)


@dataclass(frozen=True)
class PowerRow:
    model: str
    param: float
    n: int
    test: str
    reps: int
    rejection_rate: float
    mc_se: float
    wall_time_s: float


def power_curve(
    model: str,
    params: Sequence[float] | None = None,
    n: int = 300,
    reps: int = 200,
    tests: Sequence[str] = ("joint",),
    alpha: float = 0.05,
    B: int = 199,
    seed: int = 0,
    workers: int = 1,
) -> list[PowerRow]:
    """Rejection rates with binomial standard errors for each parameter and test."""
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {sorted(MODELS)}")
    params = MODELS[model].default_grid if params is None else tuple(params)
    rows = []
    for j, param in enumerate(params):
        start = time.perf_counter()
        p = replicate_pvalues(model, n, param, reps, tests, alpha, B, seed, j, workers)
        elapsed = time.perf_counter() - start
        for t_idx, test in enumerate(tests):
            rate = float(np.mean(p[:, t_idx] <= alpha))
            rows.append(
                PowerRow(
                    model=model,
                    param=float(param),
                    n=n,
                    test=test,
                    reps=reps,
                    rejection_rate=rate,
                    mc_se=math.sqrt(rate * (1.0 - rate) / reps),
                    wall_time_s=round(elapsed, 3),
                )
            )
    return rows


def rows_to_csv(rows: Sequence[PowerRow], fh: TextIO | None = None):
    out = io.StringIO() if fh is None else fh
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([f.name for f in fields(PowerRow)])
    for row in rows:
        writer.writerow(astuple(row))
    if fh is None:
        return out.getvalue()
    return None
