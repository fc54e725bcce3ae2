"""Core-tensor connectivity between input factors, output factors and products.

Every structure is reduced to a product index map: one row per product
slot ``s`` holding the input factor ``d`` and output factor ``e`` whose
responses are multiplied into that slot. All non-zero core entries are 1.
"""

from dataclasses import dataclass, field

import numpy as np

KINDS = ("diagonal", "grouped", "asym_grouped", "topographic", "custom")


@dataclass(frozen=True)
class CoreStructure:
    kind: str
    num_factors: int
    group_size: int = 1
    grid_rows: int = 0
    grid_cols: int = 0
    neighborhood: int = 1
    wraparound: bool = True
    custom_pairs: tuple = None
    num_custom_outputs: int = 0
    groups: tuple = field(init=False, repr=False, compare=False)
    pairs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown core kind {self.kind!r}; expected one of {KINDS}")
        if self.num_factors < 1:
            raise ValueError("num_factors must be >= 1")
        groups = _build_groups(self)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "pairs", _build_pairs(self, groups))

    # -- constructors -----------------------------------------------------
    @classmethod
    def diagonal(cls, num_factors):
        return cls("diagonal", num_factors)

    @classmethod
    def grouped(cls, num_factors, group_size):
        return cls("grouped", num_factors, group_size=group_size)

    @classmethod
    def asym_grouped(cls, num_groups, group_size):
        return cls("asym_grouped", num_groups, group_size=group_size)

    @classmethod
    def topographic(cls, grid_rows, grid_cols, neighborhood, wraparound=True):
        return cls("topographic", grid_rows * grid_cols, grid_rows=grid_rows,
                   grid_cols=grid_cols, neighborhood=neighborhood,
                   wraparound=wraparound)

    @classmethod
    def custom(cls, pairs, num_input_factors, num_output_factors):
        """Arbitrary product map from ``(d, e)`` pairs, one group per pair."""
        pairs = tuple((int(d), int(e)) for d, e in pairs)
        return cls("custom", num_input_factors, custom_pairs=pairs,
                   num_custom_outputs=num_output_factors)

    # -- derived sizes ----------------------------------------------------
    @property
    def num_input_factors(self):
        return self.num_factors

    @property
    def num_output_factors(self):
        if self.kind == "asym_grouped":
            return self.num_factors * self.group_size
        if self.kind == "custom":
            return self.num_custom_outputs
        return self.num_factors

    @property
    def num_products(self):
        return len(self.pairs)

    @property
    def symmetric(self):
        return self.kind != "asym_grouped"

    @property
    def product_index_map(self):
        """List of ``(input_factor, output_factor, slot)`` triples."""
        return [(int(d), int(e), s) for s, (d, e) in enumerate(self.pairs)]

    def slot_groups(self):
        """Group index of every product slot."""
        sizes = [_group_products(self, g) for g in self.groups]
        return np.repeat(np.arange(len(sizes)), sizes)

    def to_dict(self):
        d = {"kind": self.kind, "num_factors": self.num_factors}
        if self.kind in ("grouped", "asym_grouped"):
            d["group_size"] = self.group_size
        if self.kind == "custom":
            d.update(custom_pairs=[list(p) for p in self.custom_pairs],
                     num_custom_outputs=self.num_custom_outputs)
        if self.kind == "topographic":
            d.update(grid_rows=self.grid_rows, grid_cols=self.grid_cols,
                     neighborhood=self.neighborhood, wraparound=self.wraparound)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        if kind == "topographic":
            d.pop("num_factors", None)
            return cls.topographic(**d)
        if kind == "custom":
            return cls.custom(d["custom_pairs"], d["num_factors"], d["num_custom_outputs"])
        return cls(kind, **d)


def _group_products(core, members):
    if core.kind in ("asym_grouped", "custom"):
        return len(members[1])
    return len(members) ** 2


def _build_groups(core):
    F = core.num_factors
    if core.kind == "diagonal":
        return tuple((f,) for f in range(F))
    if core.kind == "custom":
        for d, e in core.custom_pairs:
            if not (0 <= d < F and 0 <= e < core.num_custom_outputs):
                raise ValueError(f"pair {(d, e)} outside the factor ranges")
        return tuple(((d,), (e,)) for d, e in core.custom_pairs)
    if core.kind == "grouped":
        g = core.group_size
        if g < 1:
            raise ValueError("group_size must be >= 1")
        # a trailing partial group absorbs factor counts that are not a multiple of g
        return tuple(tuple(range(s, min(s + g, F))) for s in range(0, F, g))
    if core.kind == "asym_grouped":
        g = core.group_size
        if g < 1:
            raise ValueError("group_size must be >= 1")
        return tuple(((k,), tuple(range(k * g, (k + 1) * g))) for k in range(F))
    rows, cols, n = core.grid_rows, core.grid_cols, core.neighborhood
    if rows < 1 or cols < 1 or n < 1:
        raise ValueError("topographic grid and neighborhood must be positive")
    if core.wraparound and n > min(rows, cols):
        raise ValueError(f"neighborhood {n} does not fit a {rows}x{cols} torus")
    offsets = range(-(n // 2), n - n // 2)
    groups = []
    for r in range(rows):
        for c in range(cols):
            members = []
            for dr in offsets:
                for dc in offsets:
                    rr, cc = r + dr, c + dc
                    if core.wraparound:
                        rr, cc = rr % rows, cc % cols
                    elif not (0 <= rr < rows and 0 <= cc < cols):
                        continue
                    members.append(rr * cols + cc)
            groups.append(tuple(members))
    return tuple(groups)


def _build_pairs(core, groups):
    if core.kind in ("asym_grouped", "custom"):
        pairs = [(inp[0], e) for inp, outs in groups for e in outs]
    else:
        # slot d_local * |G| + e_local within each group's block
        pairs = [(d, e) for members in groups for d in members for e in members]
    return np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
