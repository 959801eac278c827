"""Voronoi geometry of the singular sites and the fixed-scale limit measure.

Geometry runs in double precision: the sites are already known to far more
digits than any of the statistics computed here need.  Edges are stored as
clipped perpendicular bisectors z(t) = midpoint + t * direction, so that the
edge density integrates in closed form through arctan(t / delta).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryError, InvalidInputError


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    midpoint: complex
    direction: complex
    delta: float
    t_lo: float
    t_hi: float

    def point(self, t):
        return self.midpoint + t * self.direction

    def param(self, z):
        """Coordinate of the orthogonal projection of z onto the edge line."""
        return ((np.asarray(z) - self.midpoint) * np.conj(self.direction)).real

    def distance(self, z):
        """Distance from z to the (clipped) edge."""
        t = np.clip(self.param(z), self.t_lo, self.t_hi)
        return np.abs(np.asarray(z) - (self.midpoint + t * self.direction))

    def finite_endpoints(self):
        return [self.point(t) for t in (self.t_lo, self.t_hi) if math.isfinite(t)]

    def to_json(self):
        enc = lambda t: t if math.isfinite(t) else ("inf" if t > 0 else "-inf")
        return {"i": self.i, "j": self.j,
                "midpoint": [self.midpoint.real, self.midpoint.imag],
                "direction": [self.direction.real, self.direction.imag],
                "delta": self.delta, "t_lo": enc(self.t_lo), "t_hi": enc(self.t_hi)}


@dataclass(frozen=True)
class Cell:
    site: int
    halfplanes: tuple  # (normal, offset): Re(conj(normal) z) <= offset
    vertices: tuple  # finite vertices ordered by angle around the site


@dataclass(frozen=True)
class VoronoiDiagram:
    points: np.ndarray
    sites: tuple
    cells: tuple
    edges: tuple

    @property
    def diameter(self):
        p = self.points
        if len(p) < 2:
            return 1.0
        return float(np.max(np.abs(p[:, None] - p[None, :])))

    def nearest(self, z):
        """Index of the nearest site and the two smallest distances."""
        dist = np.abs(self.points - complex(z))
        order = np.argsort(dist, kind="stable")
        second = dist[order[1]] if len(order) > 1 else math.inf
        return int(order[0]), float(dist[order[0]]), float(second)


def _as_points(sites):
    pts = []
    for s in sites:
        loc = getattr(s, "location", s)
        pts.append(complex(loc))
    return np.array(pts, dtype=complex)


def build_diagram(sites):
    """Voronoi diagram by half-plane clipping of every pairwise bisector."""
    pts = _as_points(sites)
    N = len(pts)
    if N < 1:
        raise InvalidInputError("need at least one site")
    scale = max(1.0, float(np.max(np.abs(pts))))
    coincide = 1e-12 * scale
    for a in range(N):
        for b in range(a + 1, N):
            if abs(pts[a] - pts[b]) < coincide:
                raise InvalidInputError("duplicate Voronoi sites")

    def halfplanes(i):
        hp = []
        for k in range(N):
            if k != i:
                nrm = pts[k] - pts[i]
                hp.append((nrm, (abs(pts[k]) ** 2 - abs(pts[i]) ** 2) / 2))
        return hp

    edges = []
    for i in range(N):
        for j in range(i + 1, N):
            diff = pts[j] - pts[i]
            delta = abs(diff) / 2
            u = 1j * diff / abs(diff)
            mid = (pts[i] + pts[j]) / 2
            lo, hi = -math.inf, math.inf
            empty = False
            for k in range(N):
                if k in (i, j):
                    continue
                nrm = pts[k] - pts[i]
                off = (abs(pts[k]) ** 2 - abs(pts[i]) ** 2) / 2
                A = (np.conj(nrm) * u).real
                B = off - (np.conj(nrm) * mid).real
                if abs(A) < 1e-14 * abs(nrm):
                    if B < -coincide * abs(nrm):
                        empty = True
                        break
                    continue
                if A > 0:
                    hi = min(hi, B / A)
                else:
                    lo = max(lo, B / A)
            # cocircular configurations leave zero-length edges; drop them
            if empty or hi - lo <= coincide:
                continue
            edges.append(Edge(i, j, complex(mid), complex(u), float(delta), float(lo), float(hi)))

    cells = []
    for i in range(N):
        verts = []
        for e in edges:
            if i in (e.i, e.j):
                for v in e.finite_endpoints():
                    if all(abs(v - w) > coincide for w in verts):
                        verts.append(v)
        verts.sort(key=lambda v: math.atan2((v - pts[i]).imag, (v - pts[i]).real))
        cells.append(Cell(i, tuple(halfplanes(i)), tuple(verts)))
    return VoronoiDiagram(pts, tuple(sites), tuple(cells), tuple(edges))


def rho(diagram, z):
    """Distance from z to the nearest site."""
    return float(np.min(np.abs(diagram.points - complex(z))))


# limit measure ---------------------------------------------------------------

def _atan_ratio(t, delta):
    if math.isinf(t):
        return math.copysign(math.pi / 2, t)
    return math.atan(t / delta)


@dataclass(frozen=True)
class EdgeMass:
    edge: Edge
    mass: float
    kappa: int

    def density(self, z):
        """|a_i - a_j| / (2 pi kappa |z - a_i| |z - a_j|) at a point of the edge."""
        e = self.edge
        t = e.param(z)
        return 2 * e.delta / (2 * math.pi * self.kappa * (e.delta ** 2 + t ** 2))

    def mass_between(self, t1, t2):
        """Closed-form mass of the sub-edge t in [t1, t2]."""
        e = self.edge
        a, b = max(t1, e.t_lo), min(t2, e.t_hi)
        if b <= a:
            return 0.0
        return (_atan_ratio(b, e.delta) - _atan_ratio(a, e.delta)) / (math.pi * self.kappa)

    def cdf(self, t):
        """Normalized arctan CDF along the edge."""
        if self.mass <= 0:
            return 0.0
        return self.mass_between(self.edge.t_lo, t) / self.mass


@dataclass(frozen=True)
class LimitMeasure:
    atoms: tuple  # (site index, location, mass)
    edges: tuple  # EdgeMass
    total: float
    point_at_infinity_mass: float
    kappa: int

    def to_json(self):
        return {
            "atoms": [{"site": i, "location": [a.real, a.imag], "mass": m} for i, a, m in self.atoms],
            "edges": [dict(em.edge.to_json(), mass=em.mass) for em in self.edges],
            "total": self.total,
            "point_at_infinity_mass": self.point_at_infinity_mass,
        }


def limit_measure(sd, diagram):
    """Atoms m_j/kappa at essential sites plus arctan-integrated edge masses."""
    kappa = sd.kappa
    atoms = []
    for idx, s in enumerate(sd.sites):
        if s.kind == "essential":
            atoms.append((idx, complex(s.location), s.m / kappa))
    edges = []
    for e in diagram.edges:
        mass = (_atan_ratio(e.t_hi, e.delta) - _atan_ratio(e.t_lo, e.delta)) / (math.pi * kappa)
        edges.append(EdgeMass(e, mass, kappa))
    total = math.fsum([m for _, _, m in atoms] + [em.mass for em in edges])
    return LimitMeasure(tuple(atoms), tuple(edges), total, sd.h / kappa, kappa)


# potentials and Cauchy transform ------------------------------------------------

def psi_i(sd, i, z):
    """(log|W(z)| - log|z - a_i| - sigma) / kappa."""
    z = complex(z)
    W = np.array([complex(c) for c in sd.W.coeffs])
    logW = math.log(abs(np.polyval(W[::-1], z)))
    return (logW - math.log(abs(z - complex(sd.sites[i].location))) - sd.sigma) / sd.kappa


def psi(sd, diagram, z):
    """(log|W(z)| - log rho(z) - sigma) / kappa."""
    r = rho(diagram, z)
    if r < 1e-12 * max(1.0, abs(complex(z))):
        raise InvalidInputError("psi is undefined at a singular site")
    W = np.array([complex(c) for c in sd.W.coeffs])
    logW = math.log(abs(np.polyval(W[::-1], complex(z))))
    return (logW - math.log(r) - sd.sigma) / sd.kappa


def cauchy_transform(sd, diagram, z, boundary_tol=None):
    """(1/kappa) sum_j (varpi_j - [j == i]) / (z - a_j) in the open cell of a_i."""
    z = complex(z)
    i, d1, d2 = diagram.nearest(z)
    if d1 < 1e-12 * max(1.0, abs(z)):
        raise InvalidInputError("Cauchy transform evaluated at a site")
    if boundary_tol is None:
        boundary_tol = 1e-9 * diagram.diameter
    if d2 - d1 <= boundary_tol:
        raise BoundaryError("point lies on the Voronoi diagram")
    total = 0j
    for j, s in enumerate(sd.sites):
        w = s.varpi - (1 if j == i else 0)
        if w:
            total += w / (z - complex(s.location))
    return total / sd.kappa


def cauchy_integral_numeric(lim, z, nodes=400):
    """Integral of 1/(z - zeta) against the limit measure (Gauss-Legendre on edges).

    With t = delta tan(theta) the edge density becomes the flat measure
    d theta / (pi kappa), so infinite edges need no special treatment.
    """
    z = complex(z)
    x, w = np.polynomial.legendre.leggauss(nodes)
    total = sum(m / (z - a) for _, a, m in lim.atoms)
    for em in lim.edges:
        e = em.edge
        th0, th1 = _atan_ratio(e.t_lo, e.delta), _atan_ratio(e.t_hi, e.delta)
        th = 0.5 * (th1 - th0) * x + 0.5 * (th1 + th0)
        pts = e.midpoint + e.delta * np.tan(th) * e.direction
        vals = 1.0 / (z - pts)
        total += 0.5 * (th1 - th0) * np.sum(w * vals) / (math.pi * lim.kappa)
    return complex(total)


# comparison with empirical zero measures ----------------------------------------

def min_half_distance(diagram):
    p = diagram.points
    if len(p) < 2:
        return 1.0
    d = np.abs(p[:, None] - p[None, :])
    d[np.diag_indices(len(p))] = np.inf
    return float(np.min(d)) / 2


def disc_limit_mass(lim, center, r):
    """Closed-form limit mass of the open disc |z - center| < r."""
    c = complex(center)
    mass = sum(m for _, a, m in lim.atoms if abs(a - c) < r)
    for em in lim.edges:
        e = em.edge
        t0 = e.param(c)
        foot = e.point(t0)
        dist = abs(c - foot)
        if dist >= r:
            continue
        half = math.sqrt(r * r - dist * dist)
        mass += em.mass_between(t0 - half, t0 + half)
    return mass


def weighted_ks(samples, weights, cdf):
    """Kolmogorov-Smirnov distance between a weighted sample and a continuous CDF."""
    if len(samples) == 0:
        return None
    order = np.argsort(samples)
    s = np.asarray(samples, dtype=float)[order]
    w = np.asarray(weights, dtype=float)[order]
    w = w / w.sum()
    upper = np.cumsum(w)
    lower = upper - w
    F = np.array([cdf(t) for t in s])
    return float(max(np.max(np.abs(upper - F)), np.max(np.abs(F - lower))))


@dataclass(frozen=True)
class MeasureComparison:
    atom_rows: tuple  # (site index, radius, empirical mass, limit mass)
    edge_rows: tuple  # (i, j, corridor mass, limit mass, KS or None)
    global_discrepancy: float
    corridor_width: float

    def to_json(self):
        return {
            "atoms": [dict(zip(("site", "radius", "empirical", "limit"), r)) for r in self.atom_rows],
            "edges": [dict(zip(("i", "j", "empirical", "limit", "ks"), r)) for r in self.edge_rows],
            "global_discrepancy": self.global_discrepancy,
            "corridor_width": self.corridor_width,
        }


def default_disc_family(diagram, lim):
    """Discs around sites, edge midpoints and vertices at a few radii."""
    base = min_half_distance(diagram)
    centres = list(diagram.points)
    for em in lim.edges:
        e = em.edge
        t_mid = 0.0 if e.t_lo < 0 < e.t_hi else (
            e.t_lo + 1.0 if math.isinf(e.t_hi) else (e.t_hi - 1.0 if math.isinf(e.t_lo) else 0.5 * (e.t_lo + e.t_hi)))
        centres.append(e.point(t_mid))
        centres.extend(e.finite_endpoints())
    return [(c, base * k) for c in centres for k in (0.5, 1.0, 2.0)]


def compare_measures(emp, lim, diagram, n=None, atom_radius=None, corridor_width=None, discs=None):
    """Atom-disc counts, per-edge corridor KS statistics and a disc discrepancy."""
    locs = emp.locations
    wts = emp.weights
    base = min_half_distance(diagram)
    if atom_radius is None:
        atom_radius = 0.5 * base
    if corridor_width is None:
        nn = n if n else max(1, len(locs))
        corridor_width = 1.5 * nn ** -0.5 * diagram.diameter

    atom_rows = []
    in_atom = np.zeros(len(locs), dtype=bool)
    for idx, a, m in lim.atoms:
        hit = np.abs(locs - a) < atom_radius
        in_atom |= hit
        atom_rows.append((idx, atom_radius, float(wts[hit].sum()), m))

    edge_rows = []
    for em in lim.edges:
        e = em.edge
        if corridor_width <= 0:
            edge_rows.append((e.i, e.j, 0.0, em.mass, None))
            continue
        t = e.param(locs)
        near = (e.distance(locs) < corridor_width) & (t >= e.t_lo) & (t <= e.t_hi) & ~in_atom
        ks = weighted_ks(t[near], wts[near], em.cdf) if near.any() else None
        edge_rows.append((e.i, e.j, float(wts[near].sum()), em.mass, ks))

    if discs is None:
        discs = default_disc_family(diagram, lim)
    worst = 0.0
    for c, r in discs:
        empm = float(wts[np.abs(locs - c) < r].sum())
        worst = max(worst, abs(empm - disc_limit_mass(lim, c, r)))
    return MeasureComparison(tuple(atom_rows), tuple(edge_rows), worst, corridor_width)
