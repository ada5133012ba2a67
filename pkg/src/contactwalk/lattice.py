"""Finite-box lattice substrate: boxes, configurations, shifts and windows.

A box is [-L, L]^d with one of three boundary policies.  The policy fully
determines the value read at any site outside the box: ``empty`` reads 0,
``all_one`` reads 1, ``periodic`` wraps coordinates modulo the side length.
Configurations are dense 0/1 arrays in row-major flat order.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

BOUNDARY_POLICIES = ("empty", "all_one", "periodic")
MAX_SITES = 1 << 24

Site = tuple  # length-d tuple of ints


def as_site(x, dimension: int) -> Site:
    s = tuple(int(c) for c in (x if hasattr(x, "__len__") else (x,)))
    if len(s) != dimension:
        raise ValueError(f"site {s} does not have dimension {dimension}")
    return s


@dataclass(frozen=True)
class BoxSpec:
    """The box [-half_width, half_width]^dimension with a boundary policy."""

    dimension: int
    half_width: int
    boundary: str = "empty"

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.half_width < 1:
            raise ValueError("half_width must be >= 1")
        if self.boundary not in BOUNDARY_POLICIES:
            raise ValueError(f"unknown boundary policy {self.boundary!r}")
        if self.num_sites > MAX_SITES:
            raise ValueError(f"box has {self.num_sites} sites, cap is {MAX_SITES}")

    @property
    def side(self) -> int:
        return 2 * self.half_width + 1

    @property
    def num_sites(self) -> int:
        return self.side ** self.dimension

    @property
    def origin(self) -> Site:
        return (0,) * self.dimension

    def contains(self, site) -> bool:
        return all(abs(int(c)) <= self.half_width for c in site)

    def wrap(self, site) -> Site:
        """Wrap a site into the box (periodic reads)."""
        L, side = self.half_width, self.side
        return tuple((int(c) + L) % side - L for c in site)

    def flat(self, site) -> int:
        """Row-major flat index of an in-box site."""
        L, side = self.half_width, self.side
        idx = 0
        for c in site:
            cc = int(c) + L
            if cc < 0 or cc >= side:
                raise ValueError(f"site {tuple(site)} outside box of half width {L}")
            idx = idx * side + cc
        return idx

    def coords(self, flat_index: int) -> Site:
        L, side = self.half_width, self.side
        out = []
        f = int(flat_index)
        for _ in range(self.dimension):
            out.append(f % side - L)
            f //= side
        return tuple(reversed(out))

    def boundary_value(self) -> int:
        """Value read outside the box for the non-periodic policies."""
        return 1 if self.boundary == "all_one" else 0

    def neighbor_offsets(self) -> tuple:
        """Directed neighbor offsets, order (+e1, -e1, +e2, -e2, ...)."""
        offs = []
        for axis in range(self.dimension):
            e = [0] * self.dimension
            e[axis] = 1
            offs.append(tuple(e))
            e[axis] = -1
            offs.append(tuple(e))
        return tuple(offs)


def window_offsets(dimension: int, radius: int) -> tuple:
    """Row-major offsets of the cube [-radius, radius]^dimension."""
    return tuple(itertools.product(range(-radius, radius + 1), repeat=dimension))


@dataclass(frozen=True)
class Window:
    """Occupancy of a cube [-radius, radius]^d around some center, row-major."""

    dimension: int
    radius: int
    bits: tuple

    def __post_init__(self):
        cells = (2 * self.radius + 1) ** self.dimension
        if len(self.bits) != cells:
            raise ValueError(f"window needs {cells} cells, got {len(self.bits)}")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("window bits must be 0 or 1")

    @property
    def cells(self) -> int:
        return len(self.bits)

    @property
    def code(self) -> int:
        """Integer encoding: bit j of the code is the j-th row-major cell."""
        c = 0
        for j, b in enumerate(self.bits):
            c |= int(b) << j
        return c

    @property
    def center_bit(self) -> int:
        return int(self.bits[(self.cells - 1) // 2])

    @classmethod
    def from_code(cls, dimension: int, radius: int, code: int) -> "Window":
        cells = (2 * radius + 1) ** dimension
        return cls(dimension, radius, tuple((int(code) >> j) & 1 for j in range(cells)))


class Configuration:
    """A 0/1 configuration on a box.  Reads outside the box follow the policy."""

    __slots__ = ("box", "occupancy")

    def __init__(self, box: BoxSpec, occupancy: np.ndarray):
        occ = np.ascontiguousarray(occupancy, dtype=np.uint8)
        if occ.shape != (box.num_sites,):
            raise ValueError(f"occupancy must be flat with {box.num_sites} entries")
        if occ.max(initial=0) > 1:
            raise ValueError("occupancy entries must be 0 or 1")
        self.box = box
        self.occupancy = occ

    # -- reads ------------------------------------------------------------
    def value_at(self, site) -> int:
        box = self.box
        if box.boundary == "periodic":
            return int(self.occupancy[box.flat(box.wrap(site))])
        if box.contains(site):
            return int(self.occupancy[box.flat(site)])
        return box.boundary_value()

    @property
    def infected_count(self) -> int:
        return int(self.occupancy.sum())

    def infected_sites(self) -> list:
        return [self.box.coords(int(f)) for f in np.flatnonzero(self.occupancy)]

    def as_grid(self) -> np.ndarray:
        return self.occupancy.reshape((self.box.side,) * self.box.dimension).copy()

    def copy(self) -> "Configuration":
        return Configuration(self.box, self.occupancy.copy())

    def __eq__(self, other):
        return (isinstance(other, Configuration) and other.box == self.box
                and np.array_equal(other.occupancy, self.occupancy))

    def __repr__(self):
        return f"Configuration(box={self.box}, infected={self.infected_count})"


# -- constructors ---------------------------------------------------------

def configuration_zero(box: BoxSpec) -> Configuration:
    return Configuration(box, np.zeros(box.num_sites, dtype=np.uint8))


def configuration_all_one(box: BoxSpec) -> Configuration:
    return Configuration(box, np.ones(box.num_sites, dtype=np.uint8))


def configuration_single(box: BoxSpec, site=None) -> Configuration:
    occ = np.zeros(box.num_sites, dtype=np.uint8)
    occ[box.flat(box.origin if site is None else site)] = 1
    return Configuration(box, occ)


def configuration_from_sites(box: BoxSpec, sites) -> Configuration:
    occ = np.zeros(box.num_sites, dtype=np.uint8)
    for s in sites:
        occ[box.flat(s)] = 1
    return Configuration(box, occ)


def configuration_bernoulli(box: BoxSpec, p: float, gen: np.random.Generator) -> Configuration:
    """Sitewise independent Bernoulli(p) in one flat-order draw."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    occ = (gen.random(box.num_sites) < p).astype(np.uint8)
    return Configuration(box, occ)


# -- operations -----------------------------------------------------------

def shift(config: Configuration, displacement) -> Configuration:
    """Translate by ``displacement``: result(y) = config(y - displacement).

    Out-of-box reads are resolved by the boundary policy, so the result is
    again a configuration on the same box.
    """
    box = config.box
    disp = as_site(displacement, box.dimension)
    grid = config.occupancy.reshape((box.side,) * box.dimension)
    if box.boundary == "periodic":
        out = np.roll(grid, shift=disp, axis=tuple(range(box.dimension)))
        return Configuration(box, np.ascontiguousarray(out.reshape(-1)))
    fill = box.boundary_value()
    out = np.full_like(grid, fill)
    src = []
    dst = []
    for s in disp:
        side = box.side
        lo_dst, hi_dst = max(0, s), side + min(0, s)
        if lo_dst >= hi_dst:
            return Configuration(box, np.full(box.num_sites, fill, dtype=np.uint8))
        dst.append(slice(lo_dst, hi_dst))
        src.append(slice(lo_dst - s, hi_dst - s))
    out[tuple(dst)] = grid[tuple(src)]
    return Configuration(box, np.ascontiguousarray(out.reshape(-1)))


def neighbor_sum(config: Configuration, site) -> int:
    """Number of infected nearest neighbors of ``site`` (boundary-resolved)."""
    box = config.box
    s = as_site(site, box.dimension)
    if not box.contains(s):
        raise ValueError(f"site {s} outside box")
    total = 0
    for off in box.neighbor_offsets():
        total += config.value_at(tuple(c + o for c, o in zip(s, off)))
    return total


def local_window(config: Configuration, center, radius: int) -> Window:
    """Occupancy of the cube center + [-radius, radius]^d, row-major."""
    box = config.box
    c = as_site(center, box.dimension)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    bits = tuple(config.value_at(tuple(ci + ui for ci, ui in zip(c, u)))
                 for u in window_offsets(box.dimension, radius))
    return Window(box.dimension, radius, bits)
