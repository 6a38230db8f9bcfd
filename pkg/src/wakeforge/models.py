"""Graph transformer and message-passing graph network power surrogates.

Both models map normalised turbine features to per-turbine power divided by
rated power. Parameters live in a flat ``name -> Tensor`` dict so the
optimizer and checkpoint code can treat every model alike.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import (DenseBatch, FarmGraph, FeatureStats, denormalize_power, normalize,
                    normalize_graph, build_directed_graph, to_dense)


class StatsMismatch(ValueError):
    """Input was normalised with statistics other than the model's own."""


@dataclass
class TransformerConfig:
    n_blocks: int = 2
    n_heads: int = 2
    hidden_dim: int = 64
    encoder_hidden: int = 128
    decoder_hidden: int = 128
    ffn_hidden: int = 128
    dropout: float = 0.0
    dtype: str = "float64"

    def __post_init__(self):
        if self.hidden_dim % self.n_heads:
            raise ValueError(f"hidden_dim {self.hidden_dim} not divisible by n_heads {self.n_heads}")
        if self.n_blocks < 1:
            raise ValueError("need at least one attention block")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


@dataclass
class GnnConfig:
    n_blocks: int = 3
    width: int = 64
    vertex_latent: int = 64
    edge_latent: int = 64
    global_latent: int = 64
    dtype: str = "float64"

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ValueError("need at least one graph-net block")


def _glorot(rng, fan_in, fan_out, dtype):
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, (fan_in, fan_out)).astype(dtype)


class _Model:
    kind = ""

    def __init__(self, config, stats: FeatureStats | None, seed: int):
        self.config = config
        self.stats = stats
        self.seed = seed
        self.dtype = np.dtype(config.dtype)
        self.params: dict[str, Tensor] = {}
        self._rng = np.random.default_rng(seed)

    def _dense(self, name, fan_in, fan_out):
        self.params[f"{name}.w"] = Tensor(_glorot(self._rng, fan_in, fan_out, self.dtype), True)
        self.params[f"{name}.b"] = Tensor(np.zeros(fan_out, self.dtype), True)

    def _norm(self, name, dim):
        self.params[f"{name}.g"] = Tensor(np.ones(dim, self.dtype), True)
        self.params[f"{name}.b"] = Tensor(np.zeros(dim, self.dtype), True)

    def _mlp_params(self, name, sizes):
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            self._dense(f"{name}.{i}", a, b)

    def _lin(self, x, name):
        p = self.params
        return x @ p[f"{name}.w"] + p[f"{name}.b"]

    def _mlp(self, x, name, n_layers=2):
        for i in range(n_layers):
            x = self._lin(x, f"{name}.{i}")
            if i < n_layers - 1:
                x = ad.gelu(x)
        return x

    def n_parameters(self) -> int:
        return int(sum(t.data.size for t in self.params.values()))

    def state_arrays(self) -> dict:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_arrays(self, arrays: dict):
        for k, t in self.params.items():
            a = np.asarray(arrays[k], dtype=self.dtype)
            if a.shape != t.shape:
                raise ValueError(f"parameter {k}: shape {a.shape} does not match {t.shape}")
            t.data = a.copy()

    def config_dict(self) -> dict:
        return asdict(self.config)


class GraphTransformer(_Model):
    """Encoder MLP, a stack of multi-head attention blocks, decoder MLP.

    Each block is ``h + LN(MHA(LN(h)))`` followed by ``h + FFN(LN(h))`` with a
    GELU feed-forward network. No positional encodings are used: coordinates
    enter only as features, so the map is permutation-equivariant.
    """

    kind = "transformer"

    def __init__(self, config: TransformerConfig | None = None, stats: FeatureStats | None = None,
                 seed: int = 0):
        super().__init__(config or TransformerConfig(), stats, seed)
        c = self.config
        d = c.hidden_dim
        self._mlp_params("enc", [5, c.encoder_hidden, d])
        for b in range(c.n_blocks):
            pre = f"block{b}"
            self._norm(f"{pre}.ln1", d)
            for w in ("q", "k", "v", "o"):
                self.params[f"{pre}.attn.w{w}"] = Tensor(_glorot(self._rng, d, d, self.dtype), True)
            self.params[f"{pre}.attn.bo"] = Tensor(np.zeros(d, self.dtype), True)
            self._norm(f"{pre}.ln2", d)
            self._norm(f"{pre}.ln3", d)
            self._mlp_params(f"{pre}.ffn", [d, c.ffn_hidden, d])
        self._mlp_params("dec", [d, c.decoder_hidden, 1])

    def _ln(self, x, name):
        return ad.layer_norm(x, self.params[f"{name}.g"], self.params[f"{name}.b"])

    def _dropout(self, x, rng):
        p = self.config.dropout
        if rng is None or p == 0.0:
            return x
        keep = (rng.uniform(size=x.shape) >= p).astype(self.dtype) / (1.0 - p)
        return ad.mul(x, keep)

    def check_batch(self, batch: DenseBatch):
        if self.stats is not None and batch.fingerprint != self.stats.fingerprint():
            raise StatsMismatch(
                f"batch normalised with stats {batch.fingerprint!r}, model expects "
                f"{self.stats.fingerprint()!r}")

    def forward(self, batch: DenseBatch, want_attention: bool = False, rng=None):
        """Normalised per-turbine powers ``(B, N)`` and optional attention maps.

        Attention maps are a list (one per block) of ``(B, heads, N, N)`` arrays.
        ``rng`` enables dropout (training mode).
        """
        self.check_batch(batch)
        c, p = self.config, self.params
        mask = np.asarray(batch.mask, dtype=bool)
        x = Tensor(np.where(mask[..., None], batch.X, 0.0).astype(self.dtype))
        h = self._mlp(x, "enc")
        maps = []
        for b in range(c.n_blocks):
            pre = f"block{b}"
            a = self._ln(h, f"{pre}.ln1")
            a = ad.multi_head_attention(
                a, p[f"{pre}.attn.wq"], p[f"{pre}.attn.wk"], p[f"{pre}.attn.wv"],
                p[f"{pre}.attn.wo"], p[f"{pre}.attn.bo"], key_mask=mask,
                n_heads=c.n_heads, return_weights=want_attention)
            if want_attention:
                a, w = a
                maps.append(w)
            h = h + self._dropout(self._ln(a, f"{pre}.ln2"), rng)
            f = self._mlp(self._ln(h, f"{pre}.ln3"), f"{pre}.ffn")
            h = h + self._dropout(f, rng)
        out = self._mlp(h, "dec")
        out = ad.reshape(out, out.shape[:-1])
        out = ad.masked_fill(out, ~mask, 0.0)
        return (out, maps) if want_attention else out

    def encode(self, scenarios, n_max=None) -> DenseBatch:
        if self.stats is None:
            raise ValueError("model has no feature statistics")
        return normalize(to_dense(scenarios, n_max=n_max), self.stats)

    def predict_power(self, scenarios, n_max=None) -> list:
        """Per-turbine power (W) for each scenario, one batched forward pass."""
        batch = self.encode(scenarios, n_max)
        y = self.forward(batch).data
        return [denormalize_power(y[i, :n], self.stats) for i, n in enumerate(batch.n_real)]


def transformer_forward(batch: DenseBatch, model: GraphTransformer, want_attention: bool = False):
    """Numpy wrapper around :meth:`GraphTransformer.forward`."""
    out = model.forward(batch, want_attention)
    if want_attention:
        y, maps = out
        return y.data, maps
    return out.data


# ---------------------------------------------------------------------------
# message passing


@dataclass
class GraphBatch:
    """Disjoint union of graphs with vertices in canonical (geometric) order."""

    v: np.ndarray
    edge_index: np.ndarray
    e: np.ndarray
    u: np.ndarray
    vertex_graph: np.ndarray
    edge_graph: np.ndarray
    restore: np.ndarray  # canonical row -> original concatenated row
    sizes: np.ndarray

    @property
    def n_graphs(self) -> int:
        return len(self.u)


def _canonical(graph: FarmGraph):
    """Relabel vertices by (streamwise, spanwise, yaw) and sort edges by (dst, src)."""
    v = graph.v
    order = np.lexsort((v[:, 2], v[:, 0], v[:, 1]))
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    ei = rank[graph.edge_index] if len(graph.edge_index) else graph.edge_index.reshape(0, 2)
    eorder = np.lexsort((ei[:, 0], ei[:, 1])) if len(ei) else np.zeros(0, np.int64)
    return v[order], ei[eorder], graph.e[eorder], order


def batch_graphs(graphs) -> GraphBatch:
    vs, eis, es, us, vg, eg, restore = [], [], [], [], [], [], []
    offset = 0
    for gi, g in enumerate(graphs):
        v, ei, e, order = _canonical(g)
        vs.append(v)
        eis.append(ei + offset)
        es.append(e)
        us.append(g.u)
        vg.append(np.full(len(v), gi))
        eg.append(np.full(len(ei), gi))
        restore.append(order + offset)
        offset += len(v)
    return GraphBatch(np.vstack(vs), np.vstack(eis).astype(np.int64).reshape(-1, 2),
                      np.vstack(es).reshape(-1, 2), np.vstack(us),
                      np.concatenate(vg).astype(np.int64), np.concatenate(eg).astype(np.int64),
                      np.concatenate(restore), np.array([len(v) for v in vs]))


class GraphNetwork(_Model):
    """Encode-process-decode graph network with edge, vertex and global models.

    Per block: edges are updated from (edge, source, target, global), vertices
    from (sum of incoming edges, vertex, global), and the global state from
    (mean vertex, mean edge, global). Every update is residual.
    """

    kind = "gnn"

    def __init__(self, config: GnnConfig | None = None, stats: FeatureStats | None = None,
                 seed: int = 0):
        super().__init__(config or GnnConfig(), stats, seed)
        c = self.config
        lv, le, lu, w = c.vertex_latent, c.edge_latent, c.global_latent, c.width
        self._mlp_params("enc_v", [3, w, lv])
        self._mlp_params("enc_e", [2, w, le])
        self._mlp_params("enc_u", [2, w, lu])
        for b in range(c.n_blocks):
            self._mlp_params(f"gn{b}.edge", [le + 2 * lv + lu, w, le])
            self._mlp_params(f"gn{b}.vertex", [le + lv + lu, w, lv])
            self._mlp_params(f"gn{b}.global", [lv + le + lu, w, lu])
        self._mlp_params("dec", [lv, w, 1])

    def forward_batch(self, gb: GraphBatch) -> Tensor:
        """Normalised powers for every vertex of a :class:`GraphBatch`, in canonical order."""
        dt = self.dtype
        n_v, n_g = len(gb.v), gb.n_graphs
        src, dst = gb.edge_index[:, 0], gb.edge_index[:, 1]
        v_count = np.bincount(gb.vertex_graph, minlength=n_g).astype(dt)
        e_count = np.maximum(np.bincount(gb.edge_graph, minlength=n_g), 1).astype(dt)
        inv_v = (1.0 / v_count)[:, None]
        inv_e = (1.0 / e_count)[:, None]

        V = self._mlp(Tensor(gb.v.astype(dt)), "enc_v")
        E = self._mlp(Tensor(gb.e.astype(dt)), "enc_e")
        U = self._mlp(Tensor(gb.u.astype(dt)), "enc_u")
        for b in range(self.config.n_blocks):
            e_in = ad.concat([E, ad.gather_rows(V, src), ad.gather_rows(V, dst),
                              ad.gather_rows(U, gb.edge_graph)])
            E = E + self._mlp(e_in, f"gn{b}.edge")
            agg = ad.segment_sum(E, dst, n_v)
            v_in = ad.concat([agg, V, ad.gather_rows(U, gb.vertex_graph)])
            V = V + self._mlp(v_in, f"gn{b}.vertex")
            v_mean = ad.mul(ad.segment_sum(V, gb.vertex_graph, n_g), inv_v)
            e_mean = ad.mul(ad.segment_sum(E, gb.edge_graph, n_g), inv_e)
            U = U + self._mlp(ad.concat([v_mean, e_mean, U]), f"gn{b}.global")
        out = self._mlp(V, "dec")
        return ad.reshape(out, (n_v,))

    def forward(self, graphs) -> list:
        """Per-graph arrays of normalised powers in each graph's own vertex order."""
        graphs = [graphs] if isinstance(graphs, FarmGraph) else list(graphs)
        gb = batch_graphs(graphs)
        y = self.forward_batch(gb).data
        flat = np.empty_like(y)
        flat[gb.restore] = y
        return np.split(flat, np.cumsum(gb.sizes)[:-1])

    def encode(self, scenarios) -> list:
        if self.stats is None:
            raise ValueError("model has no feature statistics")
        return [normalize_graph(build_directed_graph(s), self.stats) for s in scenarios]

    def predict_power(self, scenarios) -> list:
        return [denormalize_power(y, self.stats) for y in self.forward(self.encode(scenarios))]


def gnn_forward(graph: FarmGraph, model: GraphNetwork) -> np.ndarray:
    """Normalised per-turbine powers for one (already normalised) graph."""
    return model.forward([graph])[0]


def build_model(kind: str, config=None, stats=None, seed: int = 0):
    if kind == "transformer":
        return GraphTransformer(config, stats, seed)
    if kind == "gnn":
        return GraphNetwork(config, stats, seed)
    raise ValueError(f"unknown model kind {kind!r}")


def extract_attention(model: GraphTransformer, scenario, threshold: float = 0.1) -> list:
    """``(i, j, score)`` triples from the last block's head-averaged attention.

    Row ``i`` is the attending (query) turbine. Only scores strictly above
    ``threshold`` are returned.
    """
    batch = model.encode([scenario], n_max=None)
    _, maps = model.forward(batch, want_attention=True)
    n = scenario.n_turbines
    avg = maps[-1][0].mean(axis=0)[:n, :n]
    i, j = np.nonzero(avg > threshold)
    return [(int(a), int(b), float(avg[a, b])) for a, b in zip(i, j)]
