"""Seeded samplers for the Gaussian prior and the 2D toy targets.

Every generator draws from numpy's default_rng with a caller-supplied
seed and a fixed draw order, so identical arguments reproduce identical
clouds byte for byte. Multi-mode targets assign points to arcs, cells,
or components round-robin before a final shuffle, which keeps every
mode populated even for tiny n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

TWO_MOONS_CENTER = (0.5, 0.25)  # mean of the two parametric arcs
TWO_MOONS_SCALE = 2.0
DEFAULT_MAX_ATOMS = 512


@dataclass(frozen=True)
class ParticleCloud:
    points: np.ndarray  # (n, 2)
    seed: int
    label: str

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise DomainError(f"cloud must be (n, 2) with n >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DomainError("cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class DiscreteTarget:
    """Finite-support target law: atoms y_i with prior weights pi_i."""

    atoms: np.ndarray   # (N, 2)
    priors: np.ndarray  # (N,)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        priors = np.asarray(self.priors, dtype=float)
        if atoms.ndim != 2 or atoms.shape[1] != 2 or atoms.shape[0] < 1:
            raise DomainError(f"atoms must be (N, 2) with N >= 1, got {atoms.shape}")
        if priors.shape != (atoms.shape[0],):
            raise DomainError("priors length must match atom count")
        if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(priors))):
            raise DomainError("target contains non-finite entries")
        if np.any(priors <= 0):
            raise DomainError("priors must be strictly positive")
        if abs(priors.sum() - 1.0) > 1e-12:
            raise DomainError(f"priors must sum to 1, got {priors.sum()!r}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "priors", priors)

    def __len__(self):
        return self.atoms.shape[0]


def two_atom_target(separation: float = 1.0) -> DiscreteTarget:
    """Symmetric pair at (+/-separation, 0) with equal priors."""
    if separation <= 0:
        raise DomainError("separation must be positive")
    return DiscreteTarget(
        atoms=np.array([[separation, 0.0], [-separation, 0.0]]),
        priors=np.array([0.5, 0.5]),
    )


def sample_prior(n: int, seed) -> ParticleCloud:
    """n i.i.d. draws from the standard bivariate normal."""
    if n < 1:
        raise DomainError("prior sample size must be >= 1")
    rng = np.random.default_rng(seed)
    return ParticleCloud(rng.standard_normal((n, 2)), _seed_tag(seed), "prior")


def make_two_moons(n: int, noise: float = 0.05, seed=0) -> ParticleCloud:
    """Two interleaved half-circles.

    Upper arc (cos th, sin th), lower arc (1 - cos th, -sin th + 0.5),
    th uniform on [0, pi], alternated round-robin. Gaussian noise is
    added on the arcs, then the cloud is shifted by the arcs' analytic
    mean (0.5, 0.25) and scaled by 2.
    """
    if n < 2:
        raise DomainError("two moons needs n >= 2")
    if noise < 0:
        raise DomainError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    arc = np.arange(n) % 2
    theta = rng.uniform(0.0, np.pi, n)
    pts = np.empty((n, 2))
    up = arc == 0
    pts[up, 0] = np.cos(theta[up])
    pts[up, 1] = np.sin(theta[up])
    pts[~up, 0] = 1.0 - np.cos(theta[~up])
    pts[~up, 1] = -np.sin(theta[~up]) + 0.5
    pts += noise * rng.standard_normal((n, 2))
    pts = (pts - np.array(TWO_MOONS_CENTER)) * TWO_MOONS_SCALE
    pts = pts[rng.permutation(n)]
    return ParticleCloud(pts, _seed_tag(seed), "two_moons")


def make_checkerboard(n: int, cells_per_side: int = 4, extent: float = 2.0,
                      seed=0) -> ParticleCloud:
    """Uniform samples over the black cells of a checkerboard on [-e, e]^2."""
    if n < 1:
        raise DomainError("checkerboard needs n >= 1")
    if cells_per_side % 2 != 0 or cells_per_side < 2:
        raise DomainError("cells_per_side must be a positive even count")
    if extent <= 0:
        raise DomainError("extent must be positive")
    rng = np.random.default_rng(seed)
    size = 2.0 * extent / cells_per_side
    active = [(i, j)
              for i in range(cells_per_side)
              for j in range(cells_per_side)
              if (i + j) % 2 == 0]
    idx = np.arange(n) % len(active)
    corners = np.array([active[k] for k in idx], dtype=float)
    pts = -extent + (corners + rng.uniform(0.0, 1.0, (n, 2))) * size
    pts = pts[rng.permutation(n)]
    return ParticleCloud(pts, _seed_tag(seed), "checkerboard")


def make_s_curve(n: int, noise: float = 0.1, seed=0) -> ParticleCloud:
    """2D S-curve: x = sin(u), y = sign(u)(cos(u) - 1), u in [-3pi/2, 3pi/2].

    The parametric curve already spans [-1, 1] x [-2, 2], so the fit to
    [-2, 2]^2 is the identity scaling; noise is added on top of it.
    """
    if n < 1:
        raise DomainError("s-curve needs n >= 1")
    if noise < 0:
        raise DomainError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.5 * np.pi, 1.5 * np.pi, n)
    pts = np.stack([np.sin(u), np.sign(u) * (np.cos(u) - 1.0)], axis=1)
    pts += noise * rng.standard_normal((n, 2))
    return ParticleCloud(pts, _seed_tag(seed), "s_curve")


def make_gaussian_mixture(n: int, k: int = 8, radius: float = 2.0,
                          comp_std: float = 0.1, seed=0) -> ParticleCloud:
    """Equal-weight isotropic Gaussians on a ring of k means."""
    if n < 1:
        raise DomainError("mixture needs n >= 1")
    if k < 1:
        raise DomainError("component count must be >= 1")
    if radius <= 0:
        raise DomainError("radius must be positive")
    if comp_std < 0:
        raise DomainError("comp_std must be >= 0")
    rng = np.random.default_rng(seed)
    ang = 2.0 * np.pi * np.arange(k) / k
    means = radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    comp = np.arange(n) % k
    pts = means[comp] + comp_std * rng.standard_normal((n, 2))
    pts = pts[rng.permutation(n)]
    return ParticleCloud(pts, _seed_tag(seed), "gaussian_mixture")


def cloud_to_target(cloud: ParticleCloud, max_atoms: int = DEFAULT_MAX_ATOMS,
                    seed=0) -> DiscreteTarget:
    """Atom set from a cloud: all points, or a seeded subsample of max_atoms.

    Priors are uniform either way. Subsampling is without replacement
    and keeps the selected indices in ascending order.
    """
    if max_atoms < 1:
        raise DomainError("max_atoms must be >= 1")
    pts = cloud.points
    if len(cloud) > max_atoms:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(cloud), size=max_atoms, replace=False))
        pts = pts[keep]
    n = pts.shape[0]
    return DiscreteTarget(atoms=pts.copy(), priors=np.full(n, 1.0 / n))


def _seed_tag(seed) -> int:
    """Representative integer for storage on the cloud; list seeds fold."""
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    arr = np.atleast_1d(np.asarray(seed))
    return int(arr[-1])


def write_cloud_csv(path, cloud_points, comment: str | None = None) -> None:
    pts = np.asarray(cloud_points, dtype=float)
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append("x,y")
    for x, y in pts:
        lines.append(f"{float(x)!r},{float(y)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_cloud_csv(path) -> np.ndarray:
    return _read_csv_floats(path, "x,y", 2)


def write_target_csv(path, target: DiscreteTarget, comment: str | None = None) -> None:
    lines = []
    if comment:
        lines.append(f"# {comment}")
    lines.append("x,y,prior")
    for (x, y), p in zip(target.atoms, target.priors):
        lines.append(f"{float(x)!r},{float(y)!r},{float(p)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_target_csv(path) -> DiscreteTarget:
    data = _read_csv_floats(path, "x,y,prior", 3)
    return DiscreteTarget(atoms=data[:, :2], priors=data[:, 2])


def _read_csv_floats(path, expected_header: str, width: int) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header_seen = False
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if line != expected_header:
                    raise DomainError(
                        f"{path}: expected header {expected_header!r}, got {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != width:
                raise DomainError(f"{path}: malformed row {line!r}")
            rows.append([float(p) for p in parts])
    if not header_seen or not rows:
        raise DomainError(f"{path}: no data rows")
    return np.array(rows, dtype=float)
