"""Monte Carlo forecasting of cumulative publication counts, with an exact
dynamic-programming expectation oracle for cross-checking."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import stats

from .cohort import cumulative_count
from .corpus import AuthorHistory, DatasetSplit
from .creativity import CreativityModel
from .errors import ConfigError


def derive_rng(seed: int, *parts) -> np.random.Generator:
    """Counter-based generator keyed by a hash of (seed, *parts).

    Streams for distinct (seed, author, replicate) triples are independent
    of iteration order and scheduling.
    """
    msg = "\x1f".join([str(seed), *map(str, parts)]).encode("utf-8")
    digest = hashlib.blake2b(msg, digest_size=16).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest, "little")))


@dataclass
class ForecastEnsemble:
    years: tuple[int, ...]                   # t_{X+1} .. t_Y
    start_counts: dict[str, int]             # h_s(t_X) per included researcher
    trajectories: dict[str, np.ndarray]      # author -> (R, Y-X) cumulative counts
    seed: int
    replicates: int
    clamp_tally: int = 0                     # rate lookups clamped to cohort I_1
    excluded: dict[str, int] = field(default_factory=dict)   # author -> h_s(t_X)

    def mean_trajectory(self, author_id: str) -> np.ndarray:
        return self.trajectories[author_id].mean(axis=0)

    @property
    def authors(self) -> tuple[str, ...]:
        return tuple(sorted(self.trajectories))


def simulate_researcher(
    model: CreativityModel,
    h_start: int,
    X: int,
    Y: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """One trajectory of cumulative counts over intervals l = X+1 .. Y.

    Each step draws Pois(lambda_{min(h, I_1), l}) and adds it to h. Returns
    the trajectory and the number of clamped rate lookups (h > I_1).
    """
    if h_start < 1:
        raise ConfigError("inactive researcher (h_start = 0) is out of model scope")
    if not 0 <= X < Y <= model.J:
        raise ConfigError(f"need 0 <= X < Y <= J, got X={X}, Y={Y}, J={model.J}")
    h = h_start
    clamped = 0
    out = np.empty(Y - X, dtype=np.int64)
    for step, l in enumerate(range(X + 1, Y + 1)):
        if h > model.I_1:
            clamped += 1
        lam = model.rate(min(h, model.I_1), l)
        h += int(rng.poisson(lam))
        out[step] = h
    return out, clamped


def simulate_group(
    model: CreativityModel,
    test_split: DatasetSplit,
    histories: Mapping[str, AuthorHistory],
    R: int = 1000,
    seed: int = 0,
) -> ForecastEnsemble:
    """Simulate every predictable researcher of the test split.

    Researchers with h_s(t_X) = 0 or h_s(t_X) > I_1 are excluded and
    tallied. Replicate streams are keyed by (seed, author_id, replicate),
    so output is independent of iteration order and of R.
    """
    t0_model = model.t_grid[0]
    t_x, t_y = test_split.response_window
    X = t_x - t0_model
    Y = t_y - t0_model
    if not 0 <= X < Y <= model.J:
        raise ConfigError(
            f"test window ({t_x},{t_y}] outside model grid "
            f"[{t0_model},{model.t_grid[-1]}]"
        )
    t0_hist = test_split.history_window[0]
    years = tuple(range(t_x + 1, t_y + 1))
    start_counts: dict[str, int] = {}
    trajectories: dict[str, np.ndarray] = {}
    excluded: dict[str, int] = {}
    clamp_tally = 0
    for aid in sorted(test_split.authors):
        h0 = cumulative_count(histories[aid], t_x, t0_hist)
        if h0 < 1 or h0 > model.I_1:
            excluded[aid] = h0
            continue
        traj = np.empty((R, Y - X), dtype=np.int64)
        for r in range(R):
            rng = derive_rng(seed, aid, r)
            traj[r], clamped = simulate_researcher(model, h0, X, Y, rng)
            clamp_tally += clamped
        start_counts[aid] = h0
        trajectories[aid] = traj
    return ForecastEnsemble(
        years=years, start_counts=start_counts, trajectories=trajectories,
        seed=seed, replicates=R, clamp_tally=clamp_tally, excluded=excluded,
    )


def simulate_many(
    model: CreativityModel,
    h_start: int,
    X: int,
    Y: int,
    R: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized batch of R trajectories from one start count; intended for
    oracle-scale runs where per-replicate seeding is not needed."""
    if h_start < 1:
        raise ConfigError("inactive researcher (h_start = 0) is out of model scope")
    table = model.rate_table()
    h = np.full(R, h_start, dtype=np.int64)
    out = np.empty((R, Y - X), dtype=np.int64)
    for step, l in enumerate(range(X + 1, Y + 1)):
        lam = table[np.minimum(h, model.I_1), l]
        h = h + rng.poisson(lam)
        out[:, step] = h
    return out


@dataclass(frozen=True)
class ExpectedTrajectory:
    means: np.ndarray            # E[h] at each step X+1 .. Y
    truncation_mass: float       # probability mass pushed past h_cap
    truncation_warning: bool


def expected_trajectory(
    model: CreativityModel,
    h_start: int,
    X: int,
    Y: int,
    h_cap: int,
) -> ExpectedTrajectory:
    """Propagate the exact distribution of the cumulative count through each
    step, truncating at h_cap. Exact up to the reported truncation mass."""
    if h_cap < model.I_1:
        raise ConfigError(f"h_cap={h_cap} must be >= I_1={model.I_1}")
    if h_start < 1:
        raise ConfigError("inactive researcher (h_start = 0) is out of model scope")
    if not 0 <= X < Y <= model.J:
        raise ConfigError(f"need 0 <= X < Y <= J, got X={X}, Y={Y}")
    p = np.zeros(h_cap + 1)
    p[h_start] = 1.0
    lost = 0.0
    support = np.arange(h_cap + 1)
    means = np.empty(Y - X)
    for step, l in enumerate(range(X + 1, Y + 1)):
        new_p = np.zeros(h_cap + 1)
        for h in range(h_cap + 1):
            if p[h] == 0.0:
                continue
            lam = model.rate(min(max(h, 1), model.I_1), l)
            r_max = h_cap - h
            pmf = stats.poisson.pmf(np.arange(r_max + 1), lam)
            new_p[h:] += p[h] * pmf
            lost += p[h] * float(stats.poisson.sf(r_max, lam))
        p = new_p
        means[step] = float(support @ p) / p.sum()
    return ExpectedTrajectory(
        means=means,
        truncation_mass=lost,
        truncation_warning=lost > 1e-6,
    )


def write_ensemble(ensemble: ForecastEnsemble, path) -> None:
    """Point predictions: `author_id,year,mean,q05,q95` per researcher-year."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("author_id,year,mean,q05,q95\n")
        for aid in ensemble.authors:
            traj = ensemble.trajectories[aid]
            mean = traj.mean(axis=0)
            q05 = np.quantile(traj, 0.05, axis=0)
            q95 = np.quantile(traj, 0.95, axis=0)
            for k, year in enumerate(ensemble.years):
                fh.write(
                    f"{aid},{year},{float(mean[k])!r},"
                    f"{float(q05[k])!r},{float(q95[k])!r}\n"
                )


def write_replicates(ensemble: ForecastEnsemble, path) -> None:
    """Full replicate dump: `author_id,replicate,year,h`."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("author_id,replicate,year,h\n")
        for aid in ensemble.authors:
            traj = ensemble.trajectories[aid]
            for r in range(traj.shape[0]):
                for k, year in enumerate(ensemble.years):
                    fh.write(f"{aid},{r},{year},{traj[r, k]}\n")
