"""Top-down selective-tuning pass.

A gating volume mirrors every feature volume.  The pass starts from a
one-hot gating at the class node and walks the layer stack downward; at
each weighted layer every active gating node runs a three-stage selection
over its post-synaptic (PS) activities:

1. margin search: a winner-take-all competition widened by a margin theta,
   where theta is tuned so the retained activities outweigh all negative
   evidence (activity preservation),
2. similarity grouping: statistically-important cut for vector layers,
   spatially-contiguous 8-connected region for spatial layers,
3. propagation: winner activities are normalized to sum 1 and deposited
   into the lower gating volume scaled by the top node's gating activity.

Elementwise layers (relu, softmax) pass gating through unchanged.  The
bridge (flatten) additionally prunes its whole gating vector with the
statistical rule before unflattening, which curbs over-selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stnet.net import ActivationTrace, LayerSpec, Network
from stnet.tensor import FeatureVolume, GatingVolume

__all__ = [
    "PSField",
    "SelectionConfig",
    "WinnerSet",
    "DeadNodeError",
    "TDDiedError",
    "LayerRecord",
    "TDResult",
    "SI_COEFFICIENTS",
    "ps_activities",
    "ap_threshold",
    "stage1_pwta",
    "stage2_si",
    "stage2_sc",
    "stage3_propagate",
    "bridge_select",
    "td_pass",
]

SI_COEFFICIENTS = (3, 2, 1, 0, -1, -2, -3)


class DeadNodeError(ValueError):
    """A top node has no positive post-synaptic activity to select from."""


class TDDiedError(RuntimeError):
    """Every active node died at some layer; the pass cannot continue."""


@dataclass(frozen=True)
class SelectionConfig:
    """Knobs of the attentive selection, defaults mirroring the reference setup."""

    stop_layer: str = "input"
    epsilon: float = 0.0
    offset_fc: int = 0
    offset_bridge: int = 0
    sc_alpha: float = 0.2
    si_coefficients: tuple[int, ...] = SI_COEFFICIENTS
    stage2_enabled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.sc_alpha <= 1.0:
            raise ValueError("sc_alpha must lie in [0, 1]")
        if self.offset_fc < 0 or self.offset_bridge < 0:
            raise ValueError("offsets must be nonnegative")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")


@dataclass(frozen=True)
class PSField:
    """Elementwise products of one top node's RF activities with its kernel.

    ``values`` is (lower_channels, win_h, win_w) float64 for spatial layers
    and flat (n,) for fc rows.  The sum of all values plus ``bias``
    reconstructs the top node's pre-activation.  ``row0``/``col0`` give the
    window origin in the lower volume; ``channel`` pins the single source
    channel for pooling fields (conv fields span all lower channels).
    """

    values: np.ndarray
    bias: float = 0.0
    row0: int = 0
    col0: int = 0
    channel: int | None = None

    @property
    def spatial(self) -> bool:
        return self.values.ndim == 3

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def source_coords(self, flat_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Map field-flat indices to (c, h, w) coordinates in the lower volume."""
        flat_idx = np.asarray(flat_idx)
        if not self.spatial:
            zeros = np.zeros_like(flat_idx)
            return flat_idx, zeros, zeros
        ci, hi, wi = np.unravel_index(flat_idx, self.values.shape)
        if self.channel is not None:
            ci = np.full_like(ci, self.channel)
        return ci, hi + self.row0, wi + self.col0


@dataclass(frozen=True)
class WinnerSet:
    """Selection outcome for one top node: stage-1 set, stage-2 subset, margin."""

    stage1: np.ndarray
    stage2: np.ndarray
    theta: float
    normalized_weights: np.ndarray


def _window(spec: LayerSpec, h: int, w: int, lh: int, lw: int):
    k, s, p = spec.kernel, spec.stride, spec.padding
    r0 = max(h * s - p, 0)
    r1 = min(h * s - p + k, lh)
    c0 = max(w * s - p, 0)
    c1 = min(w * s - p + k, lw)
    return r0, r1, c0, c1


def ps_activities(lower: FeatureVolume, spec: LayerSpec, top_index: tuple[int, int, int]) -> PSField:
    """PS field of the top node at ``(c, h, w)`` over the lower volume.

    Padding positions are excluded from the field: their activities are
    identically zero and would only distort the negative-evidence set.
    """
    c, h, w = top_index
    kind = spec.kind
    if kind == "fc":
        vec = lower.data.reshape(-1).astype(np.float64)
        row = spec.weights[c].astype(np.float64)
        bias = float(spec.bias[c]) if spec.bias is not None else 0.0
        return PSField(values=vec * row, bias=bias)
    if kind not in ("conv", "maxpool", "avgpool"):
        raise ValueError(f"layer kind {kind!r} has no PS field")
    r0, r1, c0, c1 = _window(spec, h, w, lower.height, lower.width)
    if kind == "conv":
        win = lower.data[:, r0:r1, c0:c1].astype(np.float64)
        kr0 = r0 - (h * spec.stride - spec.padding)
        kc0 = c0 - (w * spec.stride - spec.padding)
        kern = spec.weights[c, :, kr0:kr0 + (r1 - r0), kc0:kc0 + (c1 - c0)].astype(np.float64)
        bias = float(spec.bias[c]) if spec.bias is not None else 0.0
        return PSField(values=win * kern, bias=bias, row0=r0, col0=c0)
    win = lower.data[c, r0:r1, c0:c1].astype(np.float64)
    if kind == "maxpool":
        values = np.zeros_like(win)
        arg = np.unravel_index(int(np.argmax(win)), win.shape)
        values[arg] = win[arg]
    else:  # avgpool
        values = win / float(spec.kernel * spec.kernel)
    return PSField(values=values[None, :, :], row0=r0, col0=c0, channel=c)


def ap_threshold(values: np.ndarray, epsilon: float = 0.0) -> float:
    """Smallest positive activity kept by the activity-preserve margin search.

    Positives are consumed in descending order starting from the sum of all
    nonpositive activities until the running sum reaches ``epsilon``; at
    least one positive is always consumed.  If every positive together
    still falls short, all of them are kept (returns the smallest).
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    pos = values[values > 0]
    if pos.size == 0:
        raise DeadNodeError("no positive post-synaptic activity")
    pos = np.sort(pos)[::-1]
    running = values[values <= 0].sum() + np.cumsum(pos)
    hit = np.flatnonzero(running >= epsilon)
    if hit.size == 0:
        return float(pos[-1])
    return float(pos[hit[0]])


def stage1_pwta(values: np.ndarray, epsilon: float = 0.0) -> tuple[np.ndarray, float]:
    """Stage 1: parametric WTA with the activity-preserve margin.

    Returns ``(indices, theta)`` where indices select every activity within
    ``theta`` of the maximum.  When the negative evidence is already
    covered by the single largest activity the margin degenerates to zero
    and plain WTA applies: only the first maximum wins.
    """
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    pos_mask = values > 0
    if not pos_mask.any():
        raise DeadNodeError("no positive post-synaptic activity")
    vmax = float(values.max())
    neg_sum = float(values[~pos_mask].sum())
    if neg_sum + vmax >= epsilon:
        return np.array([int(values.argmax())]), 0.0
    bound = ap_threshold(values, epsilon)
    theta = vmax - bound
    return np.flatnonzero(values >= bound), theta


def stage2_si(w1: np.ndarray, values: np.ndarray, offset: int,
              coefficients: tuple[int, ...] = SI_COEFFICIENTS) -> np.ndarray:
    """Stage 2, statistically-important mode (vector layers).

    Scans the coefficients in descending order for the first alpha whose
    cut ``s > mu + alpha*sigma`` is nonempty, then loosens alpha by
    ``offset`` steps (clamped to the last coefficient).  Sigma is the
    population standard deviation; a single winner, or an all-equal set
    that no strict cut can split, passes through unchanged.
    """
    if w1.size <= 1:
        return w1
    s = np.asarray(values, dtype=np.float64).reshape(-1)[w1]
    mu = float(s.mean())
    sigma = float(s.std())
    if sigma == 0.0:
        return w1
    for ci, alpha in enumerate(coefficients):
        if (s > mu + alpha * sigma).any():
            loose = coefficients[min(ci + offset, len(coefficients) - 1)]
            return w1[s > mu + loose * sigma]
    return w1


def _label_regions(occ: np.ndarray) -> np.ndarray:
    """8-connected components of an occupancy grid, labels 1..n in scan order."""
    h, w = occ.shape
    labels = np.zeros((h, w), dtype=np.int64)
    current = 0
    for sh in range(h):
        for sw in range(w):
            if not occ[sh, sw] or labels[sh, sw]:
                continue
            current += 1
            stack = [(sh, sw)]
            labels[sh, sw] = current
            while stack:
                r, c = stack.pop()
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        rr, cc = r + dr, c + dc
                        if 0 <= rr < h and 0 <= cc < w and occ[rr, cc] and not labels[rr, cc]:
                            labels[rr, cc] = current
                            stack.append((rr, cc))
    return labels


def stage2_sc(w1: np.ndarray, ps: np.ndarray, sc_alpha: float) -> np.ndarray:
    """Stage 2, spatially-contiguous mode (spatial layers).

    Winners are projected onto the 2D window grid by summing PS over
    channels per cell; occupied cells split into 8-connected regions; the
    region maximizing ``alpha*sum(PS) + (1-alpha)*cells`` wins.  Ties break
    toward the larger PS sum, then the smallest (row, col) anchor cell.
    """
    if w1.size == 0:
        return w1
    cdim, hdim, wdim = ps.shape
    flat = ps.reshape(-1)
    ci, hi, wi = np.unravel_index(w1, ps.shape)
    cell_ps = np.zeros((hdim, wdim), dtype=np.float64)
    np.add.at(cell_ps, (hi, wi), flat[w1])
    occ = np.zeros((hdim, wdim), dtype=bool)
    occ[hi, wi] = True
    labels = _label_regions(occ)
    best = None
    for region in range(1, labels.max() + 1):
        mask = labels == region
        sum_ps = float(cell_ps[mask].sum())
        size = int(mask.sum())
        score = sc_alpha * sum_ps + (1.0 - sc_alpha) * size
        cells = np.argwhere(mask)
        anchor = (int(cells[0][0]), int(cells[0][1]))  # argwhere scans row-major
        cand = (score, sum_ps, anchor, region)
        if best is None:
            best = cand
        elif cand[0] > best[0]:
            best = cand
        elif cand[0] == best[0] and cand[1] > best[1]:
            best = cand
        elif cand[0] == best[0] and cand[1] == best[1] and cand[2] < best[2]:
            best = cand
    winning = best[3]
    keep = labels[hi, wi] == winning
    return w1[keep]


def stage3_propagate(top_activity: float, w2: np.ndarray, ps: PSField,
                     lower_gating: GatingVolume) -> np.ndarray:
    """Stage 3: deposit the normalized winner weights scaled by the top activity.

    Returns the normalized weights (they sum to 1), so the emitted mass
    equals ``top_activity`` exactly up to rounding.
    """
    vals = ps.flat[w2]
    weights = vals / vals.sum()
    coords = ps.source_coords(w2)
    np.add.at(lower_gating.data, coords, weights * top_activity)
    return weights


def bridge_select(gating: GatingVolume, offset: int,
                  coefficients: tuple[int, ...] = SI_COEFFICIENTS) -> tuple[GatingVolume, float]:
    """Prune the bridge gating vector with the statistical rule.

    The gating activities stand in for PS values; entries not selected are
    zeroed.  Returns the pruned volume and the mass removed.
    """
    flat = gating.data.reshape(-1)
    nz = np.flatnonzero(flat > 0)
    if nz.size == 0:
        raise TDDiedError("TD pass died: bridge gating is empty")
    keep = stage2_si(nz, flat, offset, coefficients)
    pruned = np.zeros_like(flat)
    pruned[keep] = flat[keep]
    removed = float(flat.sum() - pruned.sum())
    return GatingVolume(pruned.reshape(gating.shape)), removed


@dataclass
class LayerRecord:
    """Per-layer bookkeeping of one TD traversal step (volume l -> l-1)."""

    layer: str
    kind: str
    volume_index: int
    active_in: int = 0
    dead_nodes: int = 0
    dropped_mass: float = 0.0
    bridge_removed: float = 0.0
    mass_before: float = 0.0
    mass_after: float = 0.0
    winner1_sizes: list = field(default_factory=list)
    winner2_sizes: list = field(default_factory=list)
    thetas: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "layer": self.layer,
            "kind": self.kind,
            "volume_index": self.volume_index,
            "active_in": self.active_in,
            "dead_nodes": self.dead_nodes,
            "dropped_mass": self.dropped_mass,
            "bridge_removed": self.bridge_removed,
            "mass_before": self.mass_before,
            "mass_after": self.mass_after,
            "winner1_sizes": self.winner1_sizes,
            "winner2_sizes": self.winner2_sizes,
            "thetas": self.thetas,
        }


@dataclass(frozen=True)
class TDResult:
    """Gating volumes produced by one top-down pass."""

    gating: GatingVolume
    gatings: dict
    records: tuple
    class_k: int
    stop_volume: int

    def sparsity(self) -> float:
        """Fraction of gating nodes active over all traversed volumes."""
        active = sum(g.active_count() for g in self.gatings.values())
        total = sum(g.data.size for g in self.gatings.values())
        return active / total if total else 0.0


def _select_stage2(spec: LayerSpec, ps: PSField, w1: np.ndarray,
                   config: SelectionConfig) -> np.ndarray:
    if not config.stage2_enabled:
        # ablation: single best winner at vector layers, untouched set at
        # spatial layers
        if spec.kind == "fc":
            vals = ps.flat[w1]
            return w1[[int(vals.argmax())]]
        return w1
    if spec.kind == "fc":
        return stage2_si(w1, ps.flat, config.offset_fc, config.si_coefficients)
    return stage2_sc(w1, ps.values, config.sc_alpha)


def td_pass(trace: ActivationTrace, net: Network, class_k: int,
            config: SelectionConfig) -> TDResult:
    """Run the top-down pass from a one-hot at ``class_k`` down to the stop layer.

    Returns the gating volume of the stop layer's output (``"input"`` stops
    at the image volume) along with every intermediate gating volume and
    per-layer selection records.
    """
    n_layers = len(net.layers)
    if config.stop_layer == "input":
        stop_volume = 0
    else:
        stop_volume = net.layer_index(config.stop_layer) + 1
    top_shape = net.shapes[-1]
    n_classes = top_shape[0] * top_shape[1] * top_shape[2]
    if not 0 <= class_k < n_classes:
        raise ValueError(f"class index {class_k} outside 0..{n_classes - 1}")

    top = GatingVolume.zeros(*top_shape)
    top.data.reshape(-1)[class_k] = 1.0
    gatings = {n_layers: top}
    records = []

    upper = top
    for li in range(n_layers - 1, stop_volume - 1, -1):
        spec = net.layers[li]
        lower_shape = net.shapes[li]
        rec = LayerRecord(layer=spec.name, kind=spec.kind, volume_index=li,
                          mass_before=upper.mass())
        if spec.kind in ("relu", "softmax"):
            lower = GatingVolume(upper.data.copy())
            rec.active_in = upper.active_count()
        elif spec.kind == "flatten":
            pruned, removed = bridge_select(upper, config.offset_bridge,
                                            config.si_coefficients)
            rec.active_in = upper.active_count()
            rec.bridge_removed = removed
            lower = GatingVolume(pruned.data.reshape(lower_shape))
        else:
            lower = GatingVolume.zeros(*lower_shape)
            lower_acts = trace[li]
            actives = np.argwhere(upper.data > 0)
            rec.active_in = len(actives)
            for c, h, w in actives:
                activity = float(upper.data[c, h, w])
                ps = ps_activities(lower_acts, spec, (int(c), int(h), int(w)))
                try:
                    w1, theta = stage1_pwta(ps.flat, config.epsilon)
                except DeadNodeError:
                    rec.dead_nodes += 1
                    rec.dropped_mass += activity
                    continue
                w2 = _select_stage2(spec, ps, w1, config)
                stage3_propagate(activity, w2, ps, lower)
                rec.winner1_sizes.append(int(w1.size))
                rec.winner2_sizes.append(int(w2.size))
                rec.thetas.append(float(theta))
            if rec.active_in > 0 and rec.dead_nodes == rec.active_in:
                raise TDDiedError(f"TD pass died: every active node dead at {spec.name!r}")
        rec.mass_after = lower.mass()
        records.append(rec)
        gatings[li] = lower
        upper = lower

    return TDResult(gating=gatings[stop_volume], gatings=gatings,
                    records=tuple(records), class_k=class_k, stop_volume=stop_volume)
