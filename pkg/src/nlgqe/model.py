"""Dual-encoder quality-estimation network with a weight-shared second branch."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import MeaningRepresentation, QEInstance, TextOutput, Vocabulary, linearize_mr
from .delex import default_rules, rules_from_json, rules_to_json
from .errors import CheckpointVersionError, CorruptCheckpointError, VocabularyMismatchError
from .nn import autodiff as ad
from .nn.autodiff import Tape, Tensor
from .nn.layers import GRUParams, dense, embedding_table, encode_batch, glorot_uniform

CHECKPOINT_MAGIC = "NLGQE-CHECKPOINT"
CHECKPOINT_VERSION = 1


@dataclass
class ModelParameters:
    """All trainable weights. Both scoring branches read the same objects."""

    embedding: Tensor
    mr_fwd: GRUParams
    mr_bwd: GRUParams
    text_fwd: GRUParams
    text_bwd: GRUParams
    dense_W: Tensor
    dense_b: Tensor
    out_W: Tensor
    out_b: Tensor

    @classmethod
    def init(cls, rng, vocab_size: int, width: int = 50) -> "ModelParameters":
        enc = 2 * width
        return cls(
            embedding=embedding_table(rng, vocab_size, width),
            mr_fwd=GRUParams.init(rng, width, width, "mr_fwd"),
            mr_bwd=GRUParams.init(rng, width, width, "mr_bwd"),
            text_fwd=GRUParams.init(rng, width, width, "text_fwd"),
            text_bwd=GRUParams.init(rng, width, width, "text_bwd"),
            dense_W=Tensor(glorot_uniform(rng, 2 * enc, width), True, "dense.W"),
            dense_b=Tensor(np.zeros(width), True, "dense.b"),
            out_W=Tensor(glorot_uniform(rng, width, 1), True, "out.W"),
            out_b=Tensor(np.zeros(1), True, "out.b"),
        )

    def tensors(self) -> list[Tensor]:
        out = [self.embedding]
        for gru in (self.mr_fwd, self.mr_bwd, self.text_fwd, self.text_bwd):
            out.extend(gru.tensors())
        out.extend([self.dense_W, self.dense_b, self.out_W, self.out_b])
        return out

    def by_name(self) -> dict[str, Tensor]:
        return {t.name: t for t in self.tensors()}

    @property
    def width(self) -> int:
        return self.embedding.shape[1]


@dataclass(frozen=True)
class ScorePair:
    score_a: float
    score_b: Optional[float] = None

    @property
    def margin(self) -> Optional[float]:
        return None if self.score_b is None else self.score_a - self.score_b


A_BETTER, B_BETTER, TIE = "a_better", "b_better", "tie"


class QEModel:
    """Scores (MR, text) pairs; ranks outputs by comparing scores.

    ``activation`` applies to the single hidden dense layer. ``keep_rate``
    is the dropout keep probability over embeddings in train mode.
    """

    def __init__(self, vocab: Vocabulary, params: ModelParameters, *, activation: str = "tanh",
                 keep_rate: float = 0.8, clamp: bool = False, delex_rules=None,
                 config: Optional[dict] = None, metadata: Optional[dict] = None):
        self.vocab = vocab
        self.params = params
        self.activation = activation
        self.keep_rate = keep_rate
        self.clamp = clamp
        self.delex_rules = tuple(default_rules() if delex_rules is None else delex_rules)
        self.config = dict(config or {})
        self.metadata = dict(metadata or {})

    @classmethod
    def create(cls, vocab: Vocabulary, width: int = 50, seed=0, **kw) -> "QEModel":
        rng = np.random.default_rng(seed)
        return cls(vocab, ModelParameters.init(rng, len(vocab), width), **kw)

    # ------------------------------------------------------------ forward

    def _mr_indices(self, mr: MeaningRepresentation):
        return self.vocab.encode(linearize_mr(mr))

    def _text_indices(self, text):
        if isinstance(text, str):
            text = TextOutput(text)
        return self.vocab.encode(text.tokens)

    def encode_mrs(self, mrs: Sequence[MeaningRepresentation], train_mode=False, rng=None) -> Tensor:
        p = self.params
        return encode_batch([self._mr_indices(m) for m in mrs], p.embedding, p.mr_fwd, p.mr_bwd,
                            self.keep_rate, train_mode, rng)

    def encode_texts(self, texts, train_mode=False, rng=None) -> Tensor:
        p = self.params
        return encode_batch([self._text_indices(t) for t in texts], p.embedding, p.text_fwd, p.text_bwd,
                            self.keep_rate, train_mode, rng)

    def head(self, mr_enc: Tensor, text_enc: Tensor) -> Tensor:
        """Score rows of ``[mr encoding; text encoding]``; returns shape (B,)."""
        p = self.params
        hidden = dense(ad.concat([mr_enc, text_enc], axis=1), p.dense_W, p.dense_b, self.activation)
        out = dense(hidden, p.out_W, p.out_b, "identity")
        return ad.reshape(out, (out.shape[0],))

    def forward(self, instances: Sequence[QEInstance], train_mode=False, rng=None):
        """Scores of ``text_a`` for all instances and of ``text_b`` for ranking ones.

        Each distinct MR in the batch is encoded once and shared by both
        branches. Returns ``(scores_a, scores_b, ranking_positions)``.
        """
        keys, mr_rows, unique_mrs = {}, [], []
        for inst in instances:
            key = inst.mr.canonical()
            if key not in keys:
                keys[key] = len(unique_mrs)
                unique_mrs.append(inst.mr)
            mr_rows.append(keys[key])
        mr_enc = self.encode_mrs(unique_mrs, train_mode, rng)
        rank_pos = [i for i, inst in enumerate(instances) if inst.is_ranking]
        texts = [inst.text_a for inst in instances] + [instances[i].text_b for i in rank_pos]
        rows = mr_rows + [mr_rows[i] for i in rank_pos]
        scores = self.head(ad.take(mr_enc, rows, axis=0), self.encode_texts(texts, train_mode, rng))
        n = len(instances)
        scores_a = ad.take(scores, np.arange(n))
        scores_b = ad.take(scores, np.arange(n, n + len(rank_pos))) if rank_pos else None
        return scores_a, scores_b, rank_pos

    def batch_loss(self, instances: Sequence[QEInstance], train_mode=False, rng=None, reduce="mean") -> Tensor:
        """Joint loss: squared error for rating instances, hinge on the margin for ranking ones.

        Rating instances never touch ``text_b``; ranking instances ignore
        the rating. ``reduce`` is ``mean``, ``sum`` or ``none``.
        """
        scores_a, scores_b, rank_pos = self.forward(instances, train_mode, rng)
        n = len(instances)
        rate_pos = [i for i in range(n) if not instances[i].is_ranking]
        parts, order = [], []
        if rate_pos:
            gold = np.array([instances[i].rating for i in rate_pos])
            parts.append(ad.square(ad.sub(ad.take(scores_a, rate_pos), gold)))
            order.extend(rate_pos)
        if rank_pos:
            margin = ad.sub(ad.take(scores_a, rank_pos), scores_b)
            parts.append(ad.relu(ad.sub(1.0, margin)))
            order.extend(rank_pos)
        losses = parts[0] if len(parts) == 1 else ad.concat(parts, axis=0)
        if reduce == "none":
            return ad.take(losses, np.argsort(order, kind="stable"))
        if reduce == "sum":
            return ad.total(losses)
        return ad.mean(losses)

    def instance_loss(self, instance: QEInstance, train_mode=False, rng=None):
        """Loss of one instance, recorded on a fresh tape; returns ``(loss, tape)``."""
        with Tape() as tape:
            loss = self.batch_loss([instance], train_mode, rng)
        return loss, tape

    # ------------------------------------------------------------ inference

    def score_many(self, mrs: Sequence[MeaningRepresentation], texts: Sequence, batch_size: int = 256) -> np.ndarray:
        """Eval-mode scores for aligned MR/text sequences."""
        out = np.empty(len(texts))
        for start in range(0, len(texts), batch_size):
            chunk_m = mrs[start : start + batch_size]
            chunk_t = texts[start : start + batch_size]
            keys, rows, unique = {}, [], []
            for mr in chunk_m:
                key = mr.canonical()
                if key not in keys:
                    keys[key] = len(unique)
                    unique.append(mr)
                rows.append(keys[key])
            mr_enc = self.encode_mrs(unique)
            s = self.head(ad.take(mr_enc, rows, axis=0), self.encode_texts(chunk_t)).value
            out[start : start + len(chunk_t)] = s
        if self.clamp:
            np.clip(out, 1.0, 6.0, out=out)
        return out

    def score(self, mr: MeaningRepresentation, text) -> float:
        return float(self.score_many([mr], [text])[0])

    def rank_pair(self, mr, a, b):
        """Return ``(decision, margin)`` with margin = score(a) - score(b)."""
        sa, sb = self.score_many([mr, mr], [a, b])
        margin = float(sa - sb)
        if margin > 0:
            return A_BETTER, margin
        if margin < 0:
            return B_BETTER, margin
        return TIE, 0.0

    def rank_n(self, mr, texts) -> list[int]:
        """Indices of ``texts`` ordered best first (stable for equal scores)."""
        if not len(texts):
            raise ValueError("rank_n needs at least one text")
        scores = self.score_many([mr] * len(texts), list(texts))
        return np.argsort(-scores, kind="stable").tolist()

    def predict_instances(self, instances: Sequence[QEInstance]):
        """Scores of text_a for every instance and margins for ranking instances."""
        mrs = [i.mr for i in instances]
        scores_a = self.score_many(mrs, [i.text_a for i in instances])
        rank_pos = [k for k, i in enumerate(instances) if i.is_ranking]
        margins = np.full(len(instances), np.nan)
        if rank_pos:
            sb = self.score_many([mrs[k] for k in rank_pos], [instances[k].text_b for k in rank_pos])
            margins[rank_pos] = scores_a[rank_pos] - sb
        return scores_a, margins

    # ------------------------------------------------------------ persistence

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(t.name, t.value) for t in self.params.tensors()]

    def save(self, path) -> None:
        save(self, path)

    @classmethod
    def load(cls, path, vocab: Optional[Vocabulary] = None) -> "QEModel":
        return load(path, vocab)


def save(model: QEModel, path) -> None:
    """Write a checkpoint: a text header then little-endian float64 arrays.

    Layout::

        NLGQE-CHECKPOINT <version>\\n
        <header byte length>\\n
        <UTF-8 JSON header>\\n
        <raw parameter payload>
    """
    arrays = model.state_arrays()
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    header = {
        "version": CHECKPOINT_VERSION,
        "width": model.params.width,
        "activation": model.activation,
        "keep_rate": model.keep_rate,
        "clamp": model.clamp,
        "config": model.config,
        "metadata": model.metadata,
        "delex_rules": rules_to_json(model.delex_rules),
        "vocabulary": model.vocab.itos,
        "vocabulary_sha256": model.vocab.digest(),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n{len(head)}\n".encode("ascii"))
        fh.write(head)
        fh.write(b"\n")
        fh.write(payload)


def _read_line(buf: bytes, pos: int):
    end = buf.find(b"\n", pos)
    if end < 0:
        raise CorruptCheckpointError("truncated checkpoint header")
    return buf[pos:end].decode("ascii", errors="replace"), end + 1


def load(path, vocab: Optional[Vocabulary] = None) -> QEModel:
    """Read a checkpoint written by :func:`save`.

    Raises :class:`CheckpointVersionError` for another format version,
    :class:`VocabularyMismatchError` when the stored vocabulary does not
    match its recorded digest (or ``vocab`` if given), and
    :class:`CorruptCheckpointError` for anything unreadable.
    """
    buf = Path(path).read_bytes()
    first, pos = _read_line(buf, 0)
    parts = first.split()
    if len(parts) != 2 or parts[0] != CHECKPOINT_MAGIC:
        raise CorruptCheckpointError("not a checkpoint file")
    try:
        version = int(parts[1])
    except ValueError:
        raise CorruptCheckpointError("unreadable version field") from None
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    length_line, pos = _read_line(buf, pos)
    try:
        n = int(length_line)
        header = json.loads(buf[pos : pos + n].decode("utf-8"))
    except (ValueError, UnicodeDecodeError):
        raise CorruptCheckpointError("unreadable checkpoint header") from None
    pos += n + 1
    payload = buf[pos:]
    if len(payload) != header.get("payload_bytes") or hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise CorruptCheckpointError("parameter payload truncated or damaged")

    try:
        stored = Vocabulary(header["vocabulary"])
    except (KeyError, TypeError, ValueError):
        raise VocabularyMismatchError("stored vocabulary is malformed") from None
    if stored.itos != header["vocabulary"] or stored.digest() != header["vocabulary_sha256"]:
        raise VocabularyMismatchError("stored vocabulary does not match its digest")
    if vocab is not None and vocab.digest() != stored.digest():
        raise VocabularyMismatchError("checkpoint vocabulary differs from the expected one")

    try:
        width = int(header["width"])
        specs = [(s["name"], tuple(s["shape"])) for s in header["arrays"]]
    except (KeyError, TypeError, ValueError):
        raise CorruptCheckpointError("checkpoint header lacks array layout") from None
    emb_shape = dict(specs).get("embedding")
    if emb_shape is not None and emb_shape[0] != len(stored):
        raise VocabularyMismatchError(
            f"embedding table has {emb_shape[0]} rows but the vocabulary has {len(stored)} entries"
        )
    params = ModelParameters.init(np.random.default_rng(0), len(stored), width)
    by_name = params.by_name()
    offset = 0
    for name, shape in specs:
        t = by_name.get(name)
        if t is None or t.shape != shape:
            raise CorruptCheckpointError(f"unexpected array {name} {shape}")
        size = int(np.prod(shape)) * 8
        t.value = np.frombuffer(payload, dtype="<f8", count=size // 8, offset=offset).astype(np.float64).reshape(shape)
        offset += size
    if offset != len(payload):
        raise CorruptCheckpointError("payload size does not match declared arrays")
    return QEModel(
        stored, params,
        activation=header["activation"], keep_rate=header["keep_rate"], clamp=header["clamp"],
        delex_rules=rules_from_json(header["delex_rules"]),
        config=header["config"], metadata=header["metadata"],
    )
