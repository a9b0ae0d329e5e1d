"""Cycle-level model of the sparse weight-stationary systolic tensor array.

The array is an R x C grid of tensor processing elements (TPEs).  Each TPE
holds one packed weight block stationary: n weight registers, n
position-index registers, an m-element activation register block that shifts
west to east one column per cycle, and an output register on the
north-to-south partial-sum chain.  Below the bottom row sits one
accumulator-and-adder per column; the self-test logic uses it to add golden
reference values onto the raw column sums.

Stuck-at faults are combinational forcing of a register's *read* value: the
stored bits stay intact, every consumer of the register sees the forced bit.
That makes injection idempotent and keeps fault effects strictly downstream
of the faulted site.

Timing model, with cycle 0 the first ``step`` call of a stream: input row x
is presented to array row r at cycle ``x + r`` (the usual systolic skew), and
the finished column-j sum for input row x is returned by the ``step`` call at
cycle ``x + R + j``.  A full stream of X input rows therefore takes
``X + R + C - 1`` cycles.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from stasim.arith import Word, force_signed, force_unsigned, wrap_signed
from stasim.sparsity import SparseWeightTile


class RegClass(str, Enum):
    """The five faultable register classes."""

    ACTIVATION = "activation"
    WEIGHT = "weight"
    WEIGHT_INDEX = "weight_index"
    OUTPUT = "output"
    EDGE_ACCUMULATOR = "edge_accumulator"


@dataclass(frozen=True)
class ArrayConfig:
    """Geometry and datapath widths of one array instance.

    ``mode`` names the sparsity pattern as ``"<active>:<m>"``; slots past the
    active count still exist physically (and can be faulted) but are gated
    out of the products.  By default every one of the ``n`` slots is active.
    """

    rows: int = 8
    cols: int = 8
    m: int = 4
    n: int = 2
    data_width: int = 16
    acc_width: int = 32
    mode: str | None = None

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"array grid {self.rows}x{self.cols} must be at least 1x1")
        if not 1 <= self.n <= self.m:
            raise ValueError(f"need 1 <= n <= m, got n={self.n} m={self.m}")
        if not 2 <= self.data_width <= 30:
            raise ValueError(f"data width {self.data_width} outside supported 2..30")
        if not self.data_width <= self.acc_width <= 62:
            raise ValueError(
                f"accumulator width {self.acc_width} must be in "
                f"{self.data_width}..62"
            )
        if self.mode is None:
            object.__setattr__(self, "mode", f"{self.n}:{self.m}")
        parts = str(self.mode).split(":")
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise ValueError(f"mode must look like '2:4', got {self.mode!r}")
        active, mode_m = int(parts[0]), int(parts[1])
        if mode_m != self.m:
            raise ValueError(f"mode {self.mode!r} disagrees with block size m={self.m}")
        if not 1 <= active <= self.n:
            raise ValueError(
                f"mode {self.mode!r} asks for {active} active slots, "
                f"but TPEs have {self.n}"
            )

    @property
    def active_slots(self) -> int:
        return int(str(self.mode).split(":")[0])

    @property
    def index_width(self) -> int:
        """Bits per position-index register."""
        return max((self.m - 1).bit_length(), 1)

    @property
    def block_rows(self) -> int:
        """Dense weight rows one tile covers (rows * m)."""
        return self.rows * self.m

    @property
    def tile_shape(self) -> tuple[int, int]:
        return (self.block_rows, self.cols)


_REG_DIMS = {
    RegClass.ACTIVATION: "m",
    RegClass.WEIGHT: "n",
    RegClass.WEIGHT_INDEX: "n",
    RegClass.OUTPUT: None,
    RegClass.EDGE_ACCUMULATOR: None,
}


@dataclass(frozen=True)
class FaultSite:
    """One stuck-at fault: a register cell whose read is tied to 0 or 1.

    ``element`` selects the register within its class at that TPE (activation
    element, weight slot, or index slot); output registers and edge
    accumulators have a single element, 0.  Edge accumulators sit below the
    array, so their ``row`` is fixed at 0 and only ``col`` selects one.
    """

    reg_class: RegClass
    row: int
    col: int
    element: int
    bit: int
    stuck: int

    def validate(self, config: ArrayConfig) -> None:
        if self.stuck not in (0, 1):
            raise ValueError(f"stuck polarity must be 0 or 1, got {self.stuck}")
        if not 0 <= self.col < config.cols:
            raise ValueError(f"column {self.col} outside 0..{config.cols - 1}")
        if self.reg_class is RegClass.EDGE_ACCUMULATOR:
            if self.row != 0:
                raise ValueError("edge accumulator faults are addressed by column; row must be 0")
        elif not 0 <= self.row < config.rows:
            raise ValueError(f"row {self.row} outside 0..{config.rows - 1}")
        counts = {
            RegClass.ACTIVATION: config.m,
            RegClass.WEIGHT: config.n,
            RegClass.WEIGHT_INDEX: config.n,
            RegClass.OUTPUT: 1,
            RegClass.EDGE_ACCUMULATOR: 1,
        }
        widths = {
            RegClass.ACTIVATION: config.data_width,
            RegClass.WEIGHT: config.data_width,
            RegClass.WEIGHT_INDEX: config.index_width,
            RegClass.OUTPUT: config.acc_width,
            RegClass.EDGE_ACCUMULATOR: config.acc_width,
        }
        if not 0 <= self.element < counts[self.reg_class]:
            raise ValueError(
                f"element {self.element} invalid for {self.reg_class.value} "
                f"(limit {counts[self.reg_class]})"
            )
        if not 0 <= self.bit < widths[self.reg_class]:
            raise ValueError(
                f"bit {self.bit} invalid for {self.reg_class.value} "
                f"(width {widths[self.reg_class]})"
            )

    def spec(self) -> str:
        """Compact ``class:row:col:element:bit:stuck`` form."""
        return (
            f"{self.reg_class.value}:{self.row}:{self.col}:"
            f"{self.element}:{self.bit}:{self.stuck}"
        )


@dataclass(frozen=True)
class TpeState:
    """Read-back view of one TPE's registers (fault forcing applied).

    Position-index registers are unsigned patterns; read their ``bits``
    field for the selected element, not the signed view.
    """

    activation: tuple[Word, ...]
    weights: tuple[Word, ...]
    indexes: tuple[Word, ...]
    output: Word


class TensorArray:
    """Mutable state machine for one array instance.

    Not thread-safe; campaigns wanting parallelism run one instance per
    worker and merge results afterwards.
    """

    def __init__(self, config: ArrayConfig):
        self.config = config
        r, c, m, n = config.rows, config.cols, config.m, config.n
        self._act = np.zeros((r, c, m), dtype=np.int64)
        self._wgt = np.zeros((r, c, n), dtype=np.int64)
        self._idx = np.zeros((r, c, n), dtype=np.int64)
        self._out = np.zeros((r, c), dtype=np.int64)
        self._edge = np.zeros(c, dtype=np.int64)
        # Selection pattern the self-test override forces: column j picks
        # activation element j mod m, in every slot of every row.
        pattern = (np.arange(c, dtype=np.int64) % m)[None, :, None]
        self._forced_sel = np.broadcast_to(pattern, (r, c, n)).copy()
        self._sel_can_overflow = (1 << config.index_width) > m
        self._faults: list[FaultSite] = []
        self._faults_by_class: dict[RegClass, list[FaultSite]] = {
            cls: [] for cls in RegClass
        }
        self.weights_loaded = False
        self.cycles = 0

    # -- fault management -------------------------------------------------

    @property
    def faults(self) -> tuple[FaultSite, ...]:
        return tuple(self._faults)

    def inject(self, fault: FaultSite) -> None:
        fault.validate(self.config)
        self._faults.append(fault)
        self._faults_by_class[fault.reg_class].append(fault)

    def clear_faults(self) -> None:
        self._faults.clear()
        for lst in self._faults_by_class.values():
            lst.clear()

    def _forced(self, stored: np.ndarray, cls: RegClass, width: int) -> np.ndarray:
        """Register-file read: stored bits with this class's faults forced.

        Data and accumulator registers hold signed words; position-index
        registers hold unsigned patterns, so a forced index can point past
        the block (selecting nothing) but never goes negative.
        """
        active = self._faults_by_class[cls]
        if not active:
            return stored
        force = force_unsigned if cls is RegClass.WEIGHT_INDEX else force_signed
        read = stored.copy()
        for f in active:
            if cls is RegClass.EDGE_ACCUMULATOR:
                read[f.col] = force(read[f.col], width, f.bit, f.stuck)
            elif cls is RegClass.OUTPUT:
                read[f.row, f.col] = force(read[f.row, f.col], width, f.bit, f.stuck)
            else:
                read[f.row, f.col, f.element] = force(
                    read[f.row, f.col, f.element], width, f.bit, f.stuck
                )
        return read

    def _read_act(self) -> np.ndarray:
        return self._forced(self._act, RegClass.ACTIVATION, self.config.data_width)

    def _read_wgt(self) -> np.ndarray:
        return self._forced(self._wgt, RegClass.WEIGHT, self.config.data_width)

    def _read_idx(self) -> np.ndarray:
        return self._forced(self._idx, RegClass.WEIGHT_INDEX, self.config.index_width)

    def _read_out(self) -> np.ndarray:
        return self._forced(self._out, RegClass.OUTPUT, self.config.acc_width)

    def _read_edge(self) -> np.ndarray:
        return self._forced(self._edge, RegClass.EDGE_ACCUMULATOR, self.config.acc_width)

    # -- weight loading ----------------------------------------------------

    def load_weights(self, tile: SparseWeightTile) -> None:
        """Shift a packed tile into the weight and index registers.

        Loading runs column-parallel, one grid row per cycle, so it costs
        ``rows`` cycles.  Output and activation registers are cleared.
        """
        cfg = self.config
        if (tile.grid_rows, tile.grid_cols) != (cfg.rows, cfg.cols):
            raise ValueError(
                f"tile grid {tile.grid_rows}x{tile.grid_cols} does not match "
                f"array {cfg.rows}x{cfg.cols}"
            )
        if tile.m != cfg.m or tile.n != cfg.n:
            raise ValueError(
                f"tile packing {tile.n}:{tile.m} does not match array "
                f"{cfg.n}:{cfg.m}"
            )
        if tile.data_width != cfg.data_width:
            raise ValueError(
                f"tile data width {tile.data_width} does not match array "
                f"{cfg.data_width}"
            )
        vals, idxs = tile.as_arrays()
        self._wgt[:] = vals
        self._idx[:] = idxs
        self._act[:] = 0
        self._out[:] = 0
        self._edge[:] = 0
        self.weights_loaded = True
        self.cycles += cfg.rows

    # -- datapath ----------------------------------------------------------

    def step(self, west_inputs=None, north_sums=None, test4_mask: bool = False):
        """Advance one clock cycle; returns the previous cycle's south outputs.

        ``west_inputs`` is an (rows, m) block per array row (None feeds a
        zero bubble), ``north_sums`` the per-column value presented to row
        0's partial-sum input.  With ``test4_mask`` set, the gating in front
        of the multiplexers overrides every index register and selects
        activation element ``col mod m`` everywhere, so index-register faults
        cannot influence the cycle.
        """
        if not self.weights_loaded:
            raise RuntimeError("weights must be loaded before stepping the array")
        cfg = self.config
        r, c, m = cfg.rows, cfg.cols, cfg.m
        if west_inputs is None:
            west = np.zeros((r, m), dtype=np.int64)
        else:
            west = wrap_signed(
                np.asarray(west_inputs, dtype=np.int64), cfg.data_width
            )
            if west.shape != (r, m):
                raise ValueError(f"west inputs must have shape {(r, m)}, got {west.shape}")
        if north_sums is None:
            north = np.zeros(c, dtype=np.int64)
        else:
            north = wrap_signed(np.asarray(north_sums, dtype=np.int64), cfg.acc_width)
            if north.shape != (c,):
                raise ValueError(f"north sums must have shape {(c,)}, got {north.shape}")

        # Activation blocks shift one TPE eastward; each hop reads the west
        # neighbour's registers, so that neighbour's stuck bits travel along.
        propagated = self._read_act()
        new_act = np.empty_like(self._act)
        new_act[:, 1:, :] = propagated[:, :-1, :]
        new_act[:, 0, :] = west
        self._act = new_act

        # Multiply phase: every slot selects one element of the freshly
        # latched block through its index register (or the forced pattern).
        selectable = self._read_act()
        if test4_mask:
            sel_idx = self._forced_sel
        else:
            sel_idx = self._read_idx()
        gathered = np.take_along_axis(
            selectable, np.minimum(sel_idx, m - 1), axis=2
        )
        if self._sel_can_overflow:
            gathered = np.where(sel_idx < m, gathered, 0)
        k = cfg.active_slots
        contrib = (self._read_wgt()[..., :k] * gathered[..., :k]).sum(axis=2)

        # Accumulate phase: add the north neighbour's previous-cycle output
        # (or the north port for row 0) and latch.
        out_read = self._read_out()
        north_in = np.empty((r, c), dtype=np.int64)
        north_in[0] = north
        north_in[1:] = out_read[:-1]
        south = out_read[-1].copy()
        self._out = wrap_signed(north_in + contrib, cfg.acc_width)
        self.cycles += 1
        return south

    def stream(self, blocks, north_values=None, test4_mask: bool = False):
        """Feed X input rows with systolic skew and collect finished sums.

        ``blocks`` has shape (X, rows, m): the per-array-row activation block
        of each input row.  ``north_values[x]`` rides along with input row x
        and reaches each column's north port exactly when that row's wave
        arrives there.  Returns (results, cycles) where results[x, j] is the
        column-j sum for input row x and cycles == X + rows + cols - 1.
        """
        cfg = self.config
        r, c = cfg.rows, cfg.cols
        blocks = np.asarray(blocks, dtype=np.int64)
        if blocks.ndim != 3 or blocks.shape[1:] != (r, cfg.m):
            raise ValueError(
                f"blocks must have shape (X, {r}, {cfg.m}), got {blocks.shape}"
            )
        x_rows = blocks.shape[0]
        if north_values is None:
            norths = np.zeros(x_rows, dtype=np.int64)
        else:
            norths = np.asarray(north_values, dtype=np.int64)
            if norths.shape != (x_rows,):
                raise ValueError(f"need one north value per input row, got {norths.shape}")

        total = x_rows + r + c - 1
        history = np.empty((total, c), dtype=np.int64)
        row_ids = np.arange(r)
        col_ids = np.arange(c)
        west = np.zeros((r, cfg.m), dtype=np.int64)
        north = np.zeros(c, dtype=np.int64)
        for t in range(total):
            west[:] = 0
            feed = t - row_ids
            live = (feed >= 0) & (feed < x_rows)
            west[live] = blocks[feed[live], row_ids[live]]
            north[:] = 0
            wave = t - col_ids
            live_n = (wave >= 0) & (wave < x_rows)
            north[live_n] = norths[wave[live_n]]
            history[t] = self.step(west, north, test4_mask)

        results = np.empty((x_rows, c), dtype=np.int64)
        for j in range(c):
            results[:, j] = history[r + j : r + j + x_rows, j]
        return results, total

    def run_compute(self, a):
        """Stream the rows of ``a`` (X x rows*m) through the loaded weights.

        Returns (results, cycles): results is the X x cols product of ``a``
        with the pruned dense weights, computed cycle by cycle through the
        array; cycles is X + rows + cols - 1.
        """
        cfg = self.config
        a = np.asarray(a, dtype=np.int64)
        if a.ndim != 2 or a.shape[1] != cfg.block_rows:
            raise ValueError(
                f"activation matrix must be (X, {cfg.block_rows}), got {a.shape}"
            )
        blocks = a.reshape(a.shape[0], cfg.rows, cfg.m)
        return self.stream(blocks)

    # -- south edge and read-back ------------------------------------------

    def edge_compare(self, raw_sums, golden) -> np.ndarray:
        """Latch raw column sums into the edge accumulators and add goldens.

        This is the comparison step of the self-test: the returned values are
        what the detection logic inspects, and they pass through the (possibly
        faulty) edge accumulator register of each column.
        """
        cfg = self.config
        raw = wrap_signed(np.asarray(raw_sums, dtype=np.int64), cfg.acc_width)
        gold = wrap_signed(np.asarray(golden, dtype=np.int64), cfg.acc_width)
        if raw.shape != (cfg.cols,) or gold.shape != (cfg.cols,):
            raise ValueError(f"edge comparison needs {cfg.cols} values per side")
        self._edge[:] = raw
        return wrap_signed(self._read_edge() + gold, cfg.acc_width)

    def output_registers(self) -> np.ndarray:
        """Forced read of all output registers (rows x cols)."""
        return self._read_out().copy()

    def tpe_state(self, row: int, col: int) -> TpeState:
        """Forced read-back of one TPE's registers."""
        cfg = self.config
        if not (0 <= row < cfg.rows and 0 <= col < cfg.cols):
            raise ValueError(f"no TPE at ({row}, {col})")
        act = self._read_act()[row, col]
        wgt = self._read_wgt()[row, col]
        idx = self._read_idx()[row, col]
        out = self._read_out()[row, col]
        return TpeState(
            activation=tuple(Word.from_signed(int(v), cfg.data_width) for v in act),
            weights=tuple(Word.from_signed(int(v), cfg.data_width) for v in wgt),
            indexes=tuple(Word.from_signed(int(v), cfg.index_width) for v in idx),
            output=Word.from_signed(int(out), cfg.acc_width),
        )
