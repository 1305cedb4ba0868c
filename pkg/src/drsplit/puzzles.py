"""Puzzle instances: parsing, lifting, rounding, validation, and the
assembly of product-space feasibility problems.

A sudoku grid is lifted to the s^3 indicator cube (flat index
(i*s + j)*s + k), an s-queens board to the flat s^2 vector.  Instances are
immutable value objects so they can be pickled into worker processes and
used as dictionary keys.
"""

import dataclasses
import math
import re
from pathlib import Path

import numpy as np

from .constraints import (
    ClueProjection,
    GroupProjection,
    project_unit_sphere,
    queens_groups,
    sudoku_cell_index,
    sudoku_groups,
)
__all__ = [
    "CircleLineInstance",
    "Hyperplane",
    "InvalidInstanceError",
    "ParseError",
    "Problem",
    "QueensInstance",
    "SudokuInstance",
    "bundled_path",
    "bundled_sudoku",
    "circle_line_instance",
    "format_grid",
    "format_sudoku",
    "lift_board",
    "lift_grid",
    "parse_sudoku",
    "queens_problem",
    "round_board",
    "round_cube",
    "sudoku_problem",
    "validate_queens",
    "validate_sudoku",
]


class ParseError(ValueError):
    """Malformed puzzle text; carries the 1-based source position."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class InvalidInstanceError(ValueError):
    """Structurally valid input describing an inconsistent instance."""


def _box_side(s):
    b = math.isqrt(s)
    if s < 4 or b * b != s:
        raise InvalidInstanceError(f"size {s} must be a perfect square >= 4")
    return b


@dataclasses.dataclass(frozen=True)
class SudokuInstance:
    """Board side plus clue triples (row, column, digit), all 0-based."""

    size: int
    clues: tuple

    def __post_init__(self):
        b = _box_side(self.size)
        s = self.size
        norm = []
        seen_cells = set()
        marks = set()
        for clue in self.clues:
            i, j, k = (int(v) for v in clue)
            if not (0 <= i < s and 0 <= j < s and 0 <= k < s):
                raise InvalidInstanceError(
                    f"clue ({i}, {j}, {k}) out of range for size {s}")
            if (i, j) in seen_cells:
                raise InvalidInstanceError(f"cell ({i}, {j}) clued twice")
            seen_cells.add((i, j))
            for mark in (("row", i, k), ("column", j, k),
                         ("box", i // b, j // b, k)):
                if mark in marks:
                    raise InvalidInstanceError(
                        f"digit {k + 1} repeats in {mark[0]} "
                        f"{mark[1:-1]} at cell ({i}, {j})")
                marks.add(mark)
            norm.append((i, j, k))
        object.__setattr__(self, "clues", tuple(sorted(norm)))

    def clue_grid(self):
        grid = np.full((self.size, self.size), -1, dtype=int)
        for (i, j, k) in self.clues:
            grid[i, j] = k
        return grid


@dataclasses.dataclass(frozen=True)
class QueensInstance:
    size: int

    def __post_init__(self):
        if self.size < 4:
            raise InvalidInstanceError(
                f"queens boards need size >= 4, got {self.size}")


# ---------------------------------------------------------------------------
# text format: one row per line, tokens separated by whitespace,
# "." or "0" for a blank, otherwise the 1-based digit

_TOKEN = re.compile(r"\S+")


def parse_sudoku(text):
    rows = [(lineno, raw) for lineno, raw in
            enumerate(text.splitlines(), start=1) if raw.strip()]
    if not rows:
        raise ParseError("empty puzzle text")
    s = len(_TOKEN.findall(rows[0][1]))
    if len(rows) != s:
        raise ParseError(
            f"line {rows[-1][0]}: expected {s} rows to match the "
            f"{s}-entry first row, got {len(rows)}", line=rows[-1][0])
    b = math.isqrt(s)
    if s < 4 or b * b != s:
        raise ParseError(f"side {s} is not a perfect square >= 4")
    clues = []
    for i, (lineno, raw) in enumerate(rows):
        matches = list(_TOKEN.finditer(raw))
        if len(matches) != s:
            raise ParseError(
                f"line {lineno}: expected {s} entries, got {len(matches)}",
                line=lineno)
        for j, m in enumerate(matches):
            tok = m.group()
            col = m.start() + 1
            if tok in (".", "0"):
                continue
            try:
                v = int(tok)
            except ValueError:
                raise ParseError(
                    f"line {lineno} column {col}: bad entry {tok!r}",
                    line=lineno, column=col) from None
            if not 1 <= v <= s:
                raise ParseError(
                    f"line {lineno} column {col}: digit {v} outside 1..{s}",
                    line=lineno, column=col)
            clues.append((i, j, v - 1))
    return SudokuInstance(s, tuple(clues))


def format_grid(grid):
    """Text form of a full or partial grid (-1 marks a blank)."""
    grid = np.asarray(grid)
    lines = []
    for row in grid:
        lines.append(" ".join("." if v < 0 else str(int(v) + 1)
                              for v in row))
    return "\n".join(lines) + "\n"


def format_sudoku(inst):
    return format_grid(inst.clue_grid())


# ---------------------------------------------------------------------------
# lifting and rounding

def lift_grid(grid):
    """Indicator cube of a (possibly partial) digit grid, flattened."""
    grid = np.asarray(grid)
    s = grid.shape[0]
    v = np.zeros(s ** 3)
    ii, jj = np.nonzero(grid >= 0)
    v[(ii * s + jj) * s + grid[ii, jj]] = 1.0
    return v


def round_cube(v, s):
    """Digit grid from a cube vector: largest entry per pillar wins."""
    return np.asarray(v).reshape(s, s, s).argmax(axis=2)


def lift_board(board):
    return np.asarray(board, dtype=float).ravel().copy()


def round_board(x, s):
    """0/1 board from a flat vector: one queen per row at the row argmax."""
    rows = np.asarray(x).reshape(s, s)
    board = np.zeros((s, s), dtype=int)
    board[np.arange(s), rows.argmax(axis=1)] = 1
    return board


# ---------------------------------------------------------------------------
# validation

def validate_sudoku(grid, inst):
    """(ok, violations) for a complete digit grid against an instance.

    Violation tags: ("row", i), ("column", j), ("block", b), ("clue", i, j).
    """
    s = inst.size
    b = math.isqrt(s)
    g = np.asarray(grid)
    full = frozenset(range(s))
    violations = []
    for i in range(s):
        if set(g[i, :].tolist()) != full:
            violations.append(("row", i))
    for j in range(s):
        if set(g[:, j].tolist()) != full:
            violations.append(("column", j))
    for bi in range(b):
        for bj in range(b):
            box = g[bi * b:(bi + 1) * b, bj * b:(bj + 1) * b]
            if set(box.ravel().tolist()) != full:
                violations.append(("block", bi * b + bj))
    for (i, j, k) in inst.clues:
        if g[i, j] != k:
            violations.append(("clue", i, j))
    return not violations, violations


def validate_queens(board, inst):
    """(ok, violations) for a 0/1 board: one queen per row and column,
    at most one per diagonal.  Tags: ("row", i), ("column", j),
    ("antidiag", i+j), ("diag", i-j)."""
    s = inst.size
    g = np.asarray(board)
    violations = []
    for i in range(s):
        if g[i, :].sum() != 1:
            violations.append(("row", i))
    for j in range(s):
        if g[:, j].sum() != 1:
            violations.append(("column", j))
    for t in range(2 * s - 1):
        if sum(g[i, t - i] for i in range(s) if 0 <= t - i < s) > 1:
            violations.append(("antidiag", t))
    for d in range(-(s - 1), s):
        if sum(g[i, i - d] for i in range(s) if 0 <= i - d < s) > 1:
            violations.append(("diag", d))
    return not violations, violations


# ---------------------------------------------------------------------------
# problem assembly

class Problem:
    """A feasibility problem as a list of set projections on one vector."""

    def __init__(self, instance, projections):
        self.instance = instance
        self.projections = list(projections)

    @property
    def n_blocks(self):
        return len(self.projections)

    @property
    def ambient_dim(self):
        if isinstance(self.instance, SudokuInstance):
            return self.instance.size ** 3
        return self.instance.size ** 2

    def initial_state(self, seed):
        """Seeded uniform start, one block row per constraint set."""
        rng = np.random.default_rng(seed)
        return rng.uniform(0.0, 1.0, size=(self.n_blocks, self.ambient_dim))

    def round(self, v):
        if isinstance(self.instance, SudokuInstance):
            return round_cube(v, self.instance.size)
        return round_board(v, self.instance.size)

    def feasible(self, v):
        if isinstance(self.instance, SudokuInstance):
            return validate_sudoku(self.round(v), self.instance)[0]
        return validate_queens(self.round(v), self.instance)[0]


def sudoku_problem(inst, tie_break="lowest", tie_seed=None):
    """Five-set lifted encoding: row, column, pillar, block, clue clamp."""
    s = inst.size
    n = s ** 3
    projections = [
        GroupProjection(sudoku_groups(s, kind), n, tie_break=tie_break,
                        seed=None if tie_seed is None else tie_seed + off)
        for off, kind in enumerate(("row", "column", "pillar", "block"))
    ]
    projections.append(ClueProjection(s, inst.clues))
    return Problem(inst, projections)


def queens_problem(inst, tie_break="lowest", tie_seed=None):
    """Four-set encoding: one-hot rows and columns, at-most-one diagonals."""
    s = inst.size
    n = s * s
    specs = (("row", False), ("column", False),
             ("antidiag", True), ("diag", True))
    projections = [
        GroupProjection(queens_groups(s, kind), n, allow_zero=zero,
                        tie_break=tie_break,
                        seed=None if tie_seed is None else tie_seed + off)
        for off, (kind, zero) in enumerate(specs)
    ]
    return Problem(inst, projections)


# ---------------------------------------------------------------------------
# bundled instances

_BUNDLED = {
    "4x4": "sudoku_4x4_4.txt",
    "9x9-37": "sudoku_9x9_37.txt",
    "9x9-22": "sudoku_9x9_22.txt",
}


def bundled_path(key):
    try:
        name = _BUNDLED[key]
    except KeyError:
        raise KeyError(f"unknown bundled instance {key!r}; "
                       f"available: {sorted(_BUNDLED)}") from None
    return Path(__file__).parent / "data" / name


def bundled_sudoku(key):
    return parse_sudoku(bundled_path(key).read_text())


# ---------------------------------------------------------------------------
# the 2-D circle/line pair

class Hyperplane:
    """Solution set of ``normal @ x == rhs`` with a closed-form projection.

    The projection is evaluated as the literal one-line formula rather than
    through an orthonormal-basis factorization: the non-convergent orbits
    this instance exists to exhibit are sensitive at the last-ulp level, so
    the arithmetic must stay reproducible across refactors.
    """

    def __init__(self, normal, rhs):
        self.normal = np.asarray(normal, dtype=float)
        self.rhs = float(rhs)

    def project(self, x):
        n = self.normal
        return x + (self.rhs - x @ n) * n / (n @ n)


class CircleLineInstance:
    """Unit circle against a fixed line, with the bundled starting point."""

    def __init__(self, line, z0):
        self.line = line
        self.z0 = np.asarray(z0, dtype=float)

    def project_circle(self, x):
        return project_unit_sphere(x)

    def feasible(self, pt, tol=1e-9):
        pt = np.asarray(pt, dtype=float)
        on_line = np.linalg.norm(self.line.project(pt) - pt) <= tol
        on_circle = abs(np.linalg.norm(pt) - 1.0) <= tol
        return bool(on_line and on_circle)


def circle_line_instance():
    line = Hyperplane(np.array([1.0, 2.0]), np.sqrt(2.0))
    return CircleLineInstance(line, np.array([-10.0, -8.0]))
