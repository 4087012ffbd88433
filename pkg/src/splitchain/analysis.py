"""Exact probability analysis of balanced chain division under faults.

When a chain of ``n`` validators containing ``f`` faulty ones divides into
two children of ``n/2`` by a uniform random balanced split, the faulty count
``f1`` landing in one child is hypergeometric H(n, f, n/2). A child is
compromised when its faulty fraction reaches the consensus threshold alpha.
Everything here is computed in exact rational arithmetic (``fractions`` +
big-integer binomials); floats appear only in the closed-form exponential
bounds and at the output boundary.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .crypto import derive_seed
from .errors import InvalidParams

_MC_CHUNK = 20_000  # rows sampled per numpy block, caps memory at n=100


@dataclass(frozen=True)
class HypergeomParams:
    """H(N, M, n): draws without replacement from N elements, M marked."""

    N: int
    M: int
    n: int

    def __post_init__(self):
        if not (0 <= self.M <= self.N and 0 <= self.n <= self.N):
            raise InvalidParams(
                f"need 0 <= M <= N and 0 <= n <= N, got N={self.N}, "
                f"M={self.M}, n={self.n}")

    @property
    def support(self) -> range:
        return range(max(0, self.n + self.M - self.N), min(self.n, self.M) + 1)


def hypergeom_pmf(p: HypergeomParams, k: int) -> Fraction:
    """P(X = k), exactly; zero outside the support."""
    if k not in p.support:
        return Fraction(0)
    return Fraction(math.comb(p.M, k) * math.comb(p.N - p.M, p.n - k),
                    math.comb(p.N, p.n))


def hypergeom_mean(p: HypergeomParams) -> Fraction:
    return Fraction(p.n * p.M, p.N)


def hypergeom_upper_tail(p: HypergeomParams, threshold: Fraction) -> Fraction:
    """P(X >= threshold), boundary included, by exact summation."""
    threshold = Fraction(threshold)
    total = Fraction(0)
    for k in p.support:
        if k >= threshold:
            total += hypergeom_pmf(p, k)
    return total


def hypergeom_lower_tail(p: HypergeomParams, threshold: Fraction) -> Fraction:
    """P(X <= threshold), boundary included, by exact summation."""
    threshold = Fraction(threshold)
    total = Fraction(0)
    for k in p.support:
        if k <= threshold:
            total += hypergeom_pmf(p, k)
    return total


@dataclass(frozen=True)
class TailBound:
    """Closed-form tail bound value plus a validity-condition flag."""

    value: float
    within_validity: bool

    def __float__(self) -> float:
        return self.value


def tail_bound(p: HypergeomParams, t: Fraction) -> TailBound:
    """Bound e^(-2 t^2 n) on P(X >= E[X] + t n) (and the mirror lower tail).

    The stated validity condition is 0 <= t <= n M / N; outside it the bound
    value is still returned with ``within_validity`` set False.
    """
    t = Fraction(t)
    within = 0 <= t <= hypergeom_mean(p)
    value = math.exp(-float(2 * t * t * p.n))
    return TailBound(value, within)


@dataclass(frozen=True)
class DivisionAnalysisParams:
    """Balanced division of n validators (f faulty) at threshold alpha."""

    n: int
    f: int
    alpha: Fraction

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise InvalidParams(f"parent size must be even and >= 2, got {self.n}")
        if not 0 <= self.f <= self.n:
            raise InvalidParams(f"need 0 <= f <= n, got f={self.f}, n={self.n}")
        object.__setattr__(self, "alpha", Fraction(self.alpha))
        if not (0 < self.alpha <= Fraction(1, 2)):
            raise InvalidParams("threshold must lie in (0, 1/2]")

    @property
    def beta(self) -> Fraction:
        return Fraction(self.f, self.n)

    @property
    def half(self) -> int:
        return self.n // 2

    def child_violates(self, faulty_in_child: int) -> bool:
        """Security breaks when f_i >= alpha * n_i (exact rational compare)."""
        a = self.alpha
        return faulty_in_child * a.denominator >= a.numerator * self.half


def violation_tails(d: DivisionAnalysisParams) -> tuple:
    """(P(f1 >= alpha n/2), P(f1 <= f - alpha n/2)) as exact rationals.

    The two terms are the child-1 and child-2 breach probabilities; by
    exchangeability of the split they are always equal.
    """
    h = HypergeomParams(d.n, d.f, d.half)
    upper = hypergeom_upper_tail(h, d.alpha * d.half)
    lower = hypergeom_lower_tail(h, Fraction(d.f) - d.alpha * d.half)
    return upper, lower


def violation_probability_exact(d: DivisionAnalysisParams) -> Fraction:
    """Exact probability that a uniform balanced split compromises a child.

    Single summation over the support of f1 ~ H(n, f, n/2) with the union
    predicate "child 1 breaches or child 2 breaches", so the result is the
    true probability for every f, including f >= alpha*n where the two tail
    events overlap and their plain sum would exceed it.
    """
    h = HypergeomParams(d.n, d.f, d.half)
    total = Fraction(0)
    for k in h.support:
        if d.child_violates(k) or d.child_violates(d.f - k):
            total += hypergeom_pmf(h, k)
    return total


def violation_probability_bound(d: DivisionAnalysisParams) -> tuple:
    """(single_tail, combined) closed-form bounds e^(-(alpha-beta)^2 n).

    Requires beta < alpha. The single-tail form is the dashed curve of the
    security figure; the combined form covers both children.
    """
    if d.beta >= d.alpha:
        raise InvalidParams(
            f"bound needs beta < alpha, got beta={d.beta}, alpha={d.alpha}")
    gap = d.alpha - d.beta
    single = math.exp(-float(gap * gap * d.n))
    return single, min(2.0 * single, 2.0)


def bound_validity_holds(d: DivisionAnalysisParams) -> bool:
    """True when alpha <= 2*beta, the tail bound's t <= nM/N condition."""
    return d.alpha <= 2 * d.beta


def violation_frequency_montecarlo(d: DivisionAnalysisParams, trials: int,
                                   seed: int = 0) -> tuple:
    """(frequency, stderr) of violations over uniform random balanced splits.

    Each trial draws an independent uniform permutation (argsort of i.i.d.
    uniforms) and counts faulty validators landing in the first half — no
    hypergeometric sampler involved, so this is an independent check of the
    exact law. stderr is the binomial standard error of the estimate.
    """
    if trials < 1:
        raise InvalidParams("trials must be >= 1")
    rng = np.random.default_rng(seed)
    a = d.alpha
    hits = 0
    done = 0
    while done < trials:
        block = min(_MC_CHUNK, trials - done)
        order = np.argsort(rng.random((block, d.n)), axis=1)
        f1 = (order[:, :d.half] < d.f).sum(axis=1)
        v1 = f1 * a.denominator >= a.numerator * d.half
        v2 = (d.f - f1) * a.denominator >= a.numerator * d.half
        hits += int(np.count_nonzero(v1 | v2))
        done += block
    freq = hits / trials
    stderr = math.sqrt(freq * (1.0 - freq) / trials)
    return freq, stderr


@dataclass(frozen=True)
class SweepRow:
    """One (n, beta) grid point of a security-figure sweep."""

    n: int
    alpha: Fraction
    beta: Fraction  # requested grid ratio
    f: int  # realized faulty count, round(beta * n)
    exact: Fraction
    bound_single: float | None  # evaluated at the realized ratio f/n
    bound_combined: float | None
    mc_freq: float | None = None
    mc_stderr: float | None = None

    @property
    def realized_beta(self) -> Fraction:
        return Fraction(self.f, self.n)


def default_beta_grid(alpha: Fraction, steps: int = 10) -> list:
    """Evenly spaced ratios j*alpha/steps for j = 0..steps-1 (all < alpha)."""
    alpha = Fraction(alpha)
    if steps < 1:
        raise InvalidParams("steps must be >= 1")
    return [Fraction(j, steps) * alpha for j in range(steps)]


def sweep_curves(n_list, alpha: Fraction, beta_grid=None, trials: int = 0,
                 seed: int = 0) -> list:
    """Security-figure sweep: one SweepRow per (n, beta) grid point.

    f = round(beta * n); the closed-form bounds are evaluated at the realized
    ratio f/n (the theorem's beta) and left None when f/n >= alpha. With
    trials > 0 each point also gets a Monte Carlo frequency on its own
    derived seed, so rows are reproducible independently of sweep order.
    """
    alpha = Fraction(alpha)
    if beta_grid is None:
        beta_grid = default_beta_grid(alpha)
    rows = []
    for n in n_list:
        for beta in beta_grid:
            beta = Fraction(beta)
            f = round(beta * n)  # banker's rounding on exact rationals
            d = DivisionAnalysisParams(n, f, alpha)
            exact = violation_probability_exact(d)
            if d.beta < alpha:
                bound_single, bound_combined = violation_probability_bound(d)
            else:
                bound_single = bound_combined = None
            mc_freq = mc_stderr = None
            if trials > 0:
                point_seed = derive_seed("sweep-mc", n, f, str(alpha), seed)
                mc_freq, mc_stderr = violation_frequency_montecarlo(
                    d, trials, seed=point_seed)
            rows.append(SweepRow(n, alpha, beta, f, exact,
                                 bound_single, bound_combined,
                                 mc_freq, mc_stderr))
    return rows
