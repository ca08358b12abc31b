"""Physical medium model: interfaces, piecewise coefficients, and weights.

A medium is a finite window of the real line cut into pieces by interface
points.  On each piece the diffusion coefficient D and the capacity
coefficient eta are cubic polynomials; at each interface the medium carries
either a transmission weight lambda in (0, 1) or a pair of positive
concentration-jump weights (beta_plus, beta_minus), from which lambda is
derived.  The phi sequence couples the per-piece weights into the scale and
speed densities used everywhere else in the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .errors import ConfigError, DomainError

Side = Literal["left", "right"]

#: sample points per piece used when checking the declared coefficient bounds
BOUND_SAMPLES = 1024

#: relative tolerance for declaring eta continuous across an interface
ETA_CONTINUITY_TOL = 1e-12

#: agreement required between a configured lambda and the beta-derived one
LAMBDA_BETA_TOL = 1e-10


@dataclass(frozen=True)
class Interface:
    """A point where D, eta, or the concentration itself may jump.

    Parameters
    ----------
    x : float
        Interface position.
    lam : float, optional
        Transmission weight in (0, 1).  May be omitted when the beta pair
        is given, in which case `derive_lambdas` fills it.
    beta_plus, beta_minus : float, optional
        Positive concentration-jump weights; the forward problem couples
        one-sided traces through beta_plus * u(x+) = beta_minus * u(x-).
    """

    x: float
    lam: float | None = None
    beta_plus: float | None = None
    beta_minus: float | None = None

    @property
    def has_betas(self) -> bool:
        return self.beta_plus is not None and self.beta_minus is not None


@dataclass(frozen=True)
class Piece:
    """Open interval between adjacent interfaces with polynomial coefficients.

    `d_coeffs` and `eta_coeffs` are ascending cubic coefficients, so
    D(x) = c0 + c1*x + c2*x**2 + c3*x**3 in the absolute coordinate x.
    """

    left: float
    right: float
    d_coeffs: tuple[float, float, float, float]
    eta_coeffs: tuple[float, float, float, float]

    def d_at(self, x: float) -> float:
        c = self.d_coeffs
        return c[0] + x * (c[1] + x * (c[2] + x * c[3]))

    def eta_at(self, x: float) -> float:
        c = self.eta_coeffs
        return c[0] + x * (c[1] + x * (c[2] + x * c[3]))

    def eta_antiderivative(self, x: float) -> float:
        """Antiderivative of eta, used for exact per-cell averages."""
        c = self.eta_coeffs
        return x * (c[0] + x * (c[1] / 2 + x * (c[2] / 3 + x * c[3] / 4)))


@dataclass(frozen=True)
class MediumSpec:
    """Validated-by-construction description of the whole medium.

    Immutable; all derived objects (scale maps, chains, solvers) treat a
    spec as shared read-only state.
    """

    interfaces: tuple[Interface, ...]
    pieces: tuple[Piece, ...]
    window: tuple[float, float]
    bounds: tuple[float, float]

    @property
    def n_interfaces(self) -> int:
        return len(self.interfaces)

    def interface_positions(self) -> np.ndarray:
        return np.array([itf.x for itf in self.interfaces])

    def piece_index_at(self, x: float, side: Side = "right") -> int:
        """List index of the piece whose closure contains x.

        At an interface, `side` selects the adjacent piece; at a window
        end only the inner piece exists and is returned for either side.
        """
        y_min, y_max = self.window
        if x < y_min or x > y_max:
            raise DomainError(f"x={x!r} outside window [{y_min}, {y_max}]")
        if side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        for idx, piece in enumerate(self.pieces):
            if piece.left < x < piece.right:
                return idx
            if x == piece.left:
                return idx if (side == "right" or idx == 0) else idx - 1
        # x == y_max
        return len(self.pieces) - 1

    def signed_piece_index(self, list_index: int) -> int:
        """Signed piece index: the piece right of the first interface is 0."""
        return list_index - 1 if self.interfaces else list_index

    def lambdas(self) -> list[float]:
        out = []
        for itf in self.interfaces:
            if itf.lam is None:
                raise ConfigError(
                    f"interface at x={itf.x} has no lambda; run derive_lambdas first")
            out.append(itf.lam)
        return out


@dataclass(frozen=True)
class PhiSequence:
    """Per-piece positive weights phi_j with phi_0 = 1.

    Keys are signed piece indices: piece j lies between interfaces j and
    j+1, and piece -1 is everything left of the first interface.
    """

    phi: dict[int, float]

    def __getitem__(self, signed_index: int) -> float:
        return self.phi[signed_index]

    def for_piece(self, spec: MediumSpec, list_index: int) -> float:
        return self.phi[spec.signed_piece_index(list_index)]


@dataclass(frozen=True)
class Violation:
    code: str
    where: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.where}: {self.message}"


@dataclass
class ValidationReport:
    """Outcome of validate_model: violations are data, not exceptions."""

    violations: list[Violation] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, where: str, message: str) -> None:
        self.violations.append(Violation(code, where, message))

    def summary(self) -> str:
        if self.ok:
            return "medium valid: no violations"
        lines = [f"{len(self.violations)} violation(s):"]
        lines += [f"  {v}" for v in self.violations]
        return "\n".join(lines)


def coeff_at(spec: MediumSpec, x: float, side: Side = "right") -> tuple[float, float]:
    """One-sided coefficient values (D(x+/-), eta(x+/-)).

    Away from interfaces both sides agree; at an interface the side picks
    the adjacent piece's polynomial.
    """
    piece = spec.pieces[spec.piece_index_at(x, side)]
    return piece.d_at(x), piece.eta_at(x)


def derived_lambda(d_minus: float, d_plus: float,
                   beta_plus: float, beta_minus: float) -> float:
    """Transmission weight implied by one-sided D and the beta pair."""
    return d_plus * beta_minus / (d_plus * beta_minus + d_minus * beta_plus)


def derive_lambdas(spec: MediumSpec) -> MediumSpec:
    """Return a copy of `spec` with every missing lambda filled from betas.

    Interfaces that already carry a lambda keep it (consistency with the
    betas, when both are present, is checked by `validate_model`).
    """
    new_interfaces = []
    for itf in spec.interfaces:
        if itf.lam is None:
            if not itf.has_betas:
                raise ConfigError(
                    f"interface at x={itf.x}: missing beta_plus/beta_minus, "
                    "cannot derive lambda")
            d_minus, _ = coeff_at(spec, itf.x, "left")
            d_plus, _ = coeff_at(spec, itf.x, "right")
            lam = derived_lambda(d_minus, d_plus, itf.beta_plus, itf.beta_minus)
            itf = replace(itf, lam=lam)
        new_interfaces.append(itf)
    return replace(spec, interfaces=tuple(new_interfaces))


def beta_ratio(spec: MediumSpec, j: int) -> float:
    """beta_plus/beta_minus at interface j, from betas or else from lambda."""
    itf = spec.interfaces[j]
    if itf.has_betas:
        return itf.beta_plus / itf.beta_minus
    if itf.lam is None:
        raise ConfigError(f"interface {j} has neither betas nor lambda")
    d_minus, _ = coeff_at(spec, itf.x, "left")
    d_plus, _ = coeff_at(spec, itf.x, "right")
    return d_plus * (1.0 - itf.lam) / (d_minus * itf.lam)


def phi_sequence(spec: MediumSpec) -> PhiSequence:
    """Recursive per-piece weights: phi_j / phi_{j-1} = beta_j+/beta_j-.

    phi is anchored at 1 on the piece immediately right of the first
    interface (the whole line when there are none) and extended in both
    directions by the interface ratios.
    """
    if not spec.interfaces:
        return PhiSequence({0: 1.0})
    n = spec.n_interfaces
    phi = {0: 1.0}
    for j in range(1, n):
        phi[j] = phi[j - 1] * beta_ratio(spec, j)
    phi[-1] = phi[0] / beta_ratio(spec, 0)
    return PhiSequence(phi)


def validate_model(spec: MediumSpec) -> ValidationReport:
    """Check every structural invariant of the medium; report, never raise.

    The report also carries informational entries: the lambda decay sum,
    and whether eta is continuous across each interface (the model admits
    both regimes).
    """
    report = ValidationReport()
    y_min, y_max = spec.window
    k, big_k = spec.bounds

    if not y_min < y_max:
        report.add("window", "window", f"y_min={y_min} must be < y_max={y_max}")
    if not (0 < k < big_k):
        report.add("bounds", "bounds", f"need 0 < k < K, got k={k}, K={big_k}")

    xs = [itf.x for itf in spec.interfaces]
    for j in range(1, len(xs)):
        if not xs[j - 1] < xs[j]:
            report.add("interface-order", f"interface {j}",
                       f"positions not strictly increasing: {xs[j-1]} >= {xs[j]}")
    for j, x in enumerate(xs):
        if not (y_min < x < y_max):
            report.add("interface-window", f"interface {j}",
                       f"x={x} not strictly inside window [{y_min}, {y_max}]")

    # pieces must tile the window and share endpoints with the interfaces
    if len(spec.pieces) != len(xs) + 1:
        report.add("piece-count", "pieces",
                   f"expected {len(xs) + 1} pieces for {len(xs)} interfaces, "
                   f"got {len(spec.pieces)}")
    else:
        expected = [y_min] + xs + [y_max]
        for idx, piece in enumerate(spec.pieces):
            if piece.left != expected[idx] or piece.right != expected[idx + 1]:
                report.add("piece-endpoints", f"piece {idx}",
                           f"({piece.left}, {piece.right}) does not match "
                           f"({expected[idx]}, {expected[idx + 1]})")
            if not piece.left < piece.right:
                report.add("piece-order", f"piece {idx}",
                           f"left={piece.left} must be < right={piece.right}")

    for idx, piece in enumerate(spec.pieces):
        if not piece.left < piece.right:
            continue
        grid = np.linspace(piece.left, piece.right, BOUND_SAMPLES)
        d_vals = np.array([piece.d_at(x) for x in grid])
        e_vals = np.array([piece.eta_at(x) for x in grid])
        for name, vals in (("D", d_vals), ("eta", e_vals)):
            lo, hi = vals.min(), vals.max()
            if lo < k:
                where = grid[int(vals.argmin())]
                report.add("coefficient-lower-bound", f"piece {idx}",
                           f"{name}({where:.6g})={lo:.6g} < k={k}")
            if hi > big_k:
                where = grid[int(vals.argmax())]
                report.add("coefficient-upper-bound", f"piece {idx}",
                           f"{name}({where:.6g})={hi:.6g} > K={big_k}")

    eta_continuous = []
    for j, itf in enumerate(spec.interfaces):
        if itf.lam is not None and not (0.0 < itf.lam < 1.0):
            report.add("lambda-range", f"interface {j}",
                       f"lambda={itf.lam} must lie strictly inside (0, 1)")
        if (itf.beta_plus is not None) != (itf.beta_minus is not None):
            report.add("beta-pair", f"interface {j}",
                       "beta_plus and beta_minus must be given together")
        if itf.has_betas and (itf.beta_plus <= 0 or itf.beta_minus <= 0):
            report.add("beta-positive", f"interface {j}",
                       f"betas must be positive, got ({itf.beta_plus}, {itf.beta_minus})")
        if itf.lam is None and not itf.has_betas:
            report.add("interface-weights", f"interface {j}",
                       "needs lambda or a beta_plus/beta_minus pair")
        try:
            d_minus, e_minus = coeff_at(spec, itf.x, "left")
            d_plus, e_plus = coeff_at(spec, itf.x, "right")
        except (DomainError, IndexError):
            continue
        if (itf.lam is not None and itf.has_betas
                and itf.beta_plus > 0 and itf.beta_minus > 0):
            lam_beta = derived_lambda(d_minus, d_plus, itf.beta_plus, itf.beta_minus)
            if abs(itf.lam - lam_beta) > LAMBDA_BETA_TOL:
                report.add("lambda-beta-consistency", f"interface {j}",
                           f"configured lambda={itf.lam!r} disagrees with "
                           f"beta-derived {lam_beta!r}")
        scale = max(abs(e_minus), abs(e_plus), 1.0)
        eta_continuous.append(abs(e_plus - e_minus) <= ETA_CONTINUITY_TOL * scale)

    lams = [itf.lam for itf in spec.interfaces if itf.lam is not None]
    if lams and all(0.0 < lam < 1.0 for lam in lams):
        report.info["lambda_decay_sum"] = float(sum((1.0 - lam) / lam for lam in lams))
    report.info["eta_continuous_per_interface"] = eta_continuous
    report.info["eta_regime"] = (
        "continuous" if all(eta_continuous) else "jumping") if eta_continuous else "no-interfaces"
    return report


def piecewise_constant_medium(
    interface_positions: list[float],
    d_values: list[float],
    eta_values: list[float],
    window: tuple[float, float],
    lambdas: list[float] | None = None,
    beta_pairs: list[tuple[float, float]] | None = None,
    bounds: tuple[float, float] | None = None,
) -> MediumSpec:
    """Convenience constructor for media with piecewise-constant D and eta.

    `d_values`/`eta_values` have one entry per piece (len(interfaces)+1).
    Exactly one of `lambdas` / `beta_pairs` supplies the interface weights;
    with `beta_pairs` the lambdas are derived.
    """
    n = len(interface_positions)
    if len(d_values) != n + 1 or len(eta_values) != n + 1:
        raise ConfigError("need one D and eta value per piece (n_interfaces + 1)")
    if (lambdas is None) == (beta_pairs is None):
        raise ConfigError("give exactly one of lambdas / beta_pairs")
    edges = [window[0]] + list(interface_positions) + [window[1]]
    pieces = tuple(
        Piece(edges[i], edges[i + 1], (float(d_values[i]), 0.0, 0.0, 0.0),
              (float(eta_values[i]), 0.0, 0.0, 0.0))
        for i in range(n + 1))
    interfaces = []
    for j, x in enumerate(interface_positions):
        if lambdas is not None:
            interfaces.append(Interface(float(x), lam=float(lambdas[j])))
        else:
            bp, bm = beta_pairs[j]
            interfaces.append(Interface(float(x), beta_plus=float(bp),
                                        beta_minus=float(bm)))
    if bounds is None:
        vals = list(d_values) + list(eta_values)
        bounds = (0.5 * min(vals), 2.0 * max(vals))
    spec = MediumSpec(tuple(interfaces), pieces, (float(window[0]), float(window[1])),
                      (float(bounds[0]), float(bounds[1])))
    return derive_lambdas(spec) if beta_pairs is not None else spec
