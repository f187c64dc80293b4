"""Training objectives and loop: teacher-forced likelihood, sampled policy
gradients with shaped rewards, and the linear mix between them.

The likelihood marginalizes the copy/generate choice at every target
position: a position's probability is the generate-branch probability of the
token plus the copy-branch probability summed over every copyable node whose
full surface matches the aligned span (a matched multi-token span is consumed
by one step). The policy-gradient surrogate is plain REINFORCE over sampled
trajectories with per-step reward-to-go and an exponential-moving-average
baseline.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields as dataclass_fields
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from . import metrics
from .autodiff import Tensor
from .corpus import (EOS, Example, Vocab, batch_iter, build_vocab, lint_examples,
                     source_token_stream)
from .decoder import OP_COPY, OP_GEN, DecoderConfig, Trajectory, TreeDecoder
from .encoder import EncoderConfig, TreeEncoder, hidden_matrix
from .params import AdamState, ParamStore, adam_step, clip_global_norm
from .trees import TokenTypeTree, get_grammar

log = logging.getLogger(__name__)

# loss contribution for a target unit no action can produce; finite so the
# batch still trains, large enough to surface in any loss curve
GUARD_LOGP = math.log(1e-300)

REWARD_METRICS = ("bleu4", "rougeL")


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    hidden_size: int = 64
    total_steps: int = 300
    decay_factor: float = 0.5
    reward_metric: str = "bleu4"
    min_freq_source: int = 4
    min_freq_target: int = 4
    seed: int = 0
    no_type_assoc: bool = False
    no_mask: bool = False
    no_decay: bool = False
    mle_only: bool = False
    generate_only: bool = False
    grad_clip: float | None = None
    baseline_decay: float = 0.9
    max_decode_len: int = 30
    eval_every: int = 25
    tie_forget_slots: bool = False

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must lie in (0, 1)")
        if self.reward_metric not in REWARD_METRICS:
            raise ValueError(f"reward_metric must be one of {REWARD_METRICS}")
        if self.batch_size < 1 or self.hidden_size < 1 or self.max_decode_len < 1:
            raise ValueError("batch_size, hidden_size, max_decode_len must be >= 1")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise ValueError("baseline_decay must lie in [0, 1)")


_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False,
               "yes": True, "no": False}


def config_to_text(cfg: TrainConfig) -> str:
    lines = []
    for f in dataclass_fields(TrainConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name}={'none' if v is None else v}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> TrainConfig:
    """Parse line-oriented key=value config; unknown keys are rejected."""
    known = {f.name: f for f in dataclass_fields(TrainConfig)}
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        if key == "grad_clip":
            values[key] = None if val.lower() in ("none", "") else float(val)
        elif known[key].type in ("bool", bool):
            if val.lower() not in _BOOL_WORDS:
                raise ValueError(f"config line {lineno}: bad boolean {val!r}")
            values[key] = _BOOL_WORDS[val.lower()]
        elif known[key].type in ("int", int):
            values[key] = int(val)
        elif known[key].type in ("float", float):
            values[key] = float(val)
        else:
            values[key] = val
    cfg = TrainConfig(**values)
    cfg.validate()
    return cfg


# --- reward shaping ---------------------------------------------------------

def quantize_reward(x: float) -> float:
    """Snap a [0, 1] score onto the 2**-32 grid.

    Prefix scores on this grid subtract and sum exactly in float64, so
    per-step rewards telescope bitwise to the final score. The perturbation
    is below 2.4e-10, irrelevant for learning.
    """
    return math.ldexp(round(math.ldexp(x, 32)), -32)


def reward_function(name: str) -> Callable[[Sequence[str], Sequence[str]], float]:
    if name == "bleu4":
        return lambda cand, ref: metrics.bleu4(cand, ref, smoothing="add-one").value
    if name == "rougeL":
        return lambda cand, ref: metrics.rougeL(cand, ref).value
    raise ValueError(f"unknown reward metric {name!r}")


def shaped_rewards(tokens: Sequence[str], reference: Sequence[str],
                   metric: Callable[[Sequence[str], Sequence[str]], float]) -> np.ndarray:
    """Per-token reward increments: r_m = R(prefix_m) - R(prefix_{m-1}).

    R(empty) is 0, so the increments sum exactly to the final score.
    """
    rewards = np.zeros(len(tokens))
    prev = 0.0
    for m in range(1, len(tokens) + 1):
        score = quantize_reward(metric(tokens[:m], reference))
        rewards[m - 1] = score - prev
        prev = score
    return rewards


# --- teacher-forced likelihood ----------------------------------------------

@dataclass
class TargetUnit:
    tokens: tuple[str, ...]
    node_ids: tuple[int, ...]      # copyable nodes whose surface is exactly `tokens`
    vocab_id: int | None           # generate-branch id when a single kept token
    is_eos: bool = False


def segment_target(comment: Sequence[str], tree: TokenTypeTree,
                   decoder: TreeDecoder) -> list[TargetUnit]:
    """Greedy longest-copy-match alignment of a comment against the tree.

    At each position the longest copyable node surface starting there (if
    any) becomes one unit consuming the whole span; all nodes matching that
    same span contribute to its copy likelihood. Single tokens keep both
    branches when possible.
    """
    keep = decoder.copy_keep_mask(tree)
    surfaces = [(n.id, tuple(t.lower() for t in n.tokens))
                for n in tree.nodes if keep[n.id]]
    vocab = decoder.vocab
    units: list[TargetUnit] = []
    i = 0
    comment = tuple(comment)
    while i < len(comment):
        matched = [(nid, s) for nid, s in surfaces if comment[i:i + len(s)] == s]
        span = max((len(s) for _, s in matched), default=0)
        if span >= 2:
            node_ids = tuple(nid for nid, s in matched if len(s) == span)
            units.append(TargetUnit(tokens=comment[i:i + span],
                                    node_ids=node_ids, vocab_id=None))
            i += span
        else:
            token = comment[i]
            node_ids = tuple(nid for nid, s in matched if len(s) == 1)
            vid = vocab.token_to_id.get(token)
            units.append(TargetUnit(tokens=(token,), node_ids=node_ids, vocab_id=vid))
            i += 1
    units.append(TargetUnit(tokens=(), node_ids=(), vocab_id=EOS, is_eos=True))
    return units


def _unit_probability(unit: TargetUnit, step_out, copy_feasible: bool) -> Tensor | None:
    """Operation-marginalized probability of one aligned unit; None when no
    branch can produce it."""
    if unit.is_eos:
        eos_p = ad.at(step_out.gen_probs, EOS)
        if step_out.op_probs is None or not copy_feasible:
            return eos_p
        return ad.mul(ad.at(step_out.op_probs, OP_GEN), eos_p)
    parts: list[Tensor] = []
    if step_out.op_probs is None or not copy_feasible:
        if unit.vocab_id is not None:
            parts.append(ad.at(step_out.gen_probs, unit.vocab_id))
    else:
        if unit.vocab_id is not None:
            parts.append(ad.mul(ad.at(step_out.op_probs, OP_GEN),
                                ad.at(step_out.gen_probs, unit.vocab_id)))
        if unit.node_ids:
            copied = ad.sumall(ad.take(step_out.copy_probs, unit.node_ids))
            parts.append(ad.mul(ad.at(step_out.op_probs, OP_COPY), copied))
    if not parts:
        return None
    total = parts[0]
    for p in parts[1:]:
        total = ad.add(total, p)
    return total


def mle_loss(example: Example, encoder: TreeEncoder, decoder: TreeDecoder) -> Tensor:
    """Negative log-likelihood of the comment (plus its end-of-sequence stop)
    under teacher forcing with marginalized operation selection."""
    tree = example.tree
    enc = encoder.encode(tree)
    node_matrix = hidden_matrix(enc)
    keep = decoder.copy_keep_mask(tree)
    state = decoder.initial_state(enc, tree)
    units = segment_target(example.comment, tree, decoder)
    prev: str | None = None
    total: Tensor | None = None
    for unit in units:
        state, step_out = decoder.step(state, node_matrix, keep, decoder._prev_id(prev))
        feasible = step_out.copy_probs is not None
        p = _unit_probability(unit, step_out, feasible)
        if p is None or float(p.data) <= 0.0:
            log.warning("unreachable target unit %r (no action assigns it "
                        "probability); guarding the loss", unit.tokens)
            term = Tensor(np.asarray(GUARD_LOGP))
        else:
            term = ad.log(p)
        total = term if total is None else ad.add(total, term)
        if not unit.is_eos:
            if decoder.config.use_decay and not decoder.config.generate_only:
                # teacher forcing marks every node matching a forced copy span;
                # single-token units are operation-ambiguous and leave decay alone
                new_decay = state.decay * decoder.config.decay_factor
                if len(unit.tokens) >= 2:
                    for nid in unit.node_ids:
                        new_decay[nid] = 1.0
                state.decay = new_decay
            prev = unit.tokens[-1]
    return ad.mul(total, -1.0)


# --- policy gradient ----------------------------------------------------------

@dataclass
class Baseline:
    """Exponential moving average of trajectory rewards."""
    decay: float = 0.9
    value: float = 0.0

    def update(self, mean_reward: float) -> None:
        self.value = self.decay * self.value + (1.0 - self.decay) * mean_reward


def step_rewards(trajectory: Trajectory, reference: Sequence[str],
                 metric: Callable) -> np.ndarray:
    """Group token-level shaped rewards by decoding step (a copy step earns
    the increment of its whole span; the EOS step earns 0)."""
    token_r = shaped_rewards(trajectory.tokens, reference, metric)
    out = np.zeros(len(trajectory.steps))
    pos = 0
    for i, s in enumerate(trajectory.steps):
        out[i] = token_r[pos:pos + len(s.tokens)].sum()
        pos += len(s.tokens)
    return out


def hrl_loss(example: Example, encoder: TreeEncoder, decoder: TreeDecoder,
             rng: np.random.Generator, metric: Callable,
             baseline_value: float = 0.0) -> tuple[Tensor, float]:
    """REINFORCE surrogate for one sampled trajectory.

    Returns (surrogate, total_reward); the surrogate's gradient is the
    score-function estimate of the negative expected-reward gradient, with
    per-step reward-to-go minus the baseline as the multiplier.
    """
    tree = example.tree
    enc = encoder.encode(tree)
    trajectory = decoder.decode_sample(enc, tree, rng)
    per_step = step_rewards(trajectory, example.comment, metric)
    to_go = np.cumsum(per_step[::-1])[::-1]
    advantage = to_go - baseline_value
    scored = decoder.score_trajectory(enc, tree, trajectory)
    total: Tensor | None = None
    for (logp_op, logp_word), adv in zip(scored, advantage):
        term = ad.mul(ad.add(logp_op, logp_word), -float(adv))
        total = term if total is None else ad.add(total, term)
    return total, float(per_step.sum())


# --- mixed objective -----------------------------------------------------------

def mle_weight(step: int, total_steps: int, mle_only: bool = False) -> float:
    """Linear anneal from pure likelihood (1.0) to pure reward (0.0)."""
    if mle_only:
        return 1.0
    if step > total_steps:
        log.warning("training step %d beyond schedule end %d; weight clamped to 0",
                    step, total_steps)
        return 0.0
    if step < 0:
        return 1.0
    return 1.0 - step / total_steps


def mixed_loss(example: Example, encoder: TreeEncoder, decoder: TreeDecoder,
               step: int, cfg: TrainConfig, rng: np.random.Generator,
               baseline: Baseline) -> tuple[Tensor, dict]:
    mu = mle_weight(step, cfg.total_steps, cfg.mle_only)
    metric = reward_function(cfg.reward_metric)
    parts: dict = {"mu": mu, "loss_mle": None, "loss_hrl": None, "reward": None}
    if mu == 1.0:
        loss = mle_loss(example, encoder, decoder)
        parts["loss_mle"] = float(loss.data)
        return loss, parts
    surrogate, reward = hrl_loss(example, encoder, decoder, rng, metric, baseline.value)
    parts["loss_hrl"] = float(surrogate.data)
    parts["reward"] = reward
    if mu == 0.0:
        return surrogate, parts
    likelihood = mle_loss(example, encoder, decoder)
    parts["loss_mle"] = float(likelihood.data)
    return ad.add(ad.mul(likelihood, mu), ad.mul(surrogate, 1.0 - mu)), parts


# --- evaluation helpers ---------------------------------------------------------

def greedy_candidates(examples: Sequence[Example], encoder: TreeEncoder,
                      decoder: TreeDecoder) -> list[list[str]]:
    return [decoder.decode_greedy(encoder.encode(ex.tree), ex.tree) for ex in examples]


def token_accuracy(examples: Sequence[Example], candidates: Sequence[Sequence[str]]) -> float:
    """Positional token matches over total reference length."""
    match = total = 0
    for ex, cand in zip(examples, candidates):
        total += len(ex.comment)
        match += sum(1 for a, b in zip(cand, ex.comment) if a == b)
    return match / total if total else 0.0


def mean_sentence_reward(examples: Sequence[Example], candidates: Sequence[Sequence[str]],
                         metric: Callable) -> float:
    scores = [quantize_reward(metric(c, ex.comment))
              for ex, c in zip(examples, candidates)]
    return float(np.mean(scores)) if scores else 0.0


# --- training loop ---------------------------------------------------------------

@dataclass
class TrainResult:
    store: ParamStore
    encoder: TreeEncoder
    decoder: TreeDecoder
    source_vocab: Vocab
    target_vocab: Vocab
    history: list[dict] = field(default_factory=list)
    best_params: dict | None = None
    best_score: float = float("-inf")
    aborted: bool = False


def build_model(cfg: TrainConfig, grammar_name: str, source_vocab: Vocab,
                target_vocab: Vocab) -> tuple[ParamStore, TreeEncoder, TreeDecoder]:
    grammar = get_grammar(grammar_name)
    store = ParamStore(cfg.seed)
    encoder = TreeEncoder(store, grammar, source_vocab,
                          EncoderConfig(hidden_size=cfg.hidden_size,
                                        untyped=cfg.no_type_assoc,
                                        tie_forget_slots=cfg.tie_forget_slots))
    decoder = TreeDecoder(store, grammar, target_vocab,
                          DecoderConfig(hidden_size=cfg.hidden_size,
                                        decay_factor=cfg.decay_factor,
                                        use_mask=not cfg.no_mask,
                                        use_decay=not cfg.no_decay,
                                        generate_only=cfg.generate_only,
                                        max_len=cfg.max_decode_len))
    return store, encoder, decoder


def train(train_examples: Sequence[Example], dev_examples: Sequence[Example],
          cfg: TrainConfig, log_writer=None,
          initial_params: dict | None = None) -> TrainResult:
    """Run the full objective schedule; deterministic under a fixed seed.

    Evaluates greedily on the dev set every ``eval_every`` steps, retains the
    best-dev parameter snapshot, and aborts (preserving the last finite
    parameters) if the loss goes non-finite.
    """
    cfg.validate()
    if not train_examples:
        raise ValueError("train: empty corpus")
    grammar_name = train_examples[0].tree.grammar
    if any(ex.tree.grammar != grammar_name for ex in train_examples):
        raise ValueError("train: mixed grammars in one corpus")
    source_vocab = build_vocab((source_token_stream(ex.tree) for ex in train_examples),
                               cfg.min_freq_source)
    target_vocab = build_vocab((ex.comment for ex in train_examples),
                               cfg.min_freq_target)
    problems = lint_examples(train_examples, target_vocab)
    for p in problems[:5]:
        log.warning("corpus lint: example %d position %d: %s",
                    p.example_index, p.position, p.message)
    store, encoder, decoder = build_model(cfg, grammar_name, source_vocab, target_vocab)
    if initial_params is not None:
        store.load_snapshot(initial_params)
    adam = AdamState()
    baseline = Baseline(decay=cfg.baseline_decay)
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    metric = reward_function(cfg.reward_metric)
    result = TrainResult(store=store, encoder=encoder, decoder=decoder,
                         source_vocab=source_vocab, target_vocab=target_vocab)
    last_good = store.snapshot()

    def evaluate() -> dict:
        if not dev_examples:
            return {}
        cands = greedy_candidates(dev_examples, encoder, decoder)
        refs = [list(ex.comment) for ex in dev_examples]
        scores = metrics.corpus_eval(cands, refs)
        scores["reward_mean"] = mean_sentence_reward(dev_examples, cands, metric)
        return scores

    step = 0
    epoch = 0
    while step < cfg.total_steps:
        for batch in batch_iter(train_examples, cfg.batch_size, epoch, cfg.seed):
            if step >= cfg.total_steps:
                break
            total: Tensor | None = None
            mle_vals, hrl_vals, rewards = [], [], []
            for ex in batch.examples:
                loss, parts = mixed_loss(ex, encoder, decoder, step, cfg, rng, baseline)
                total = loss if total is None else ad.add(total, loss)
                if parts["loss_mle"] is not None:
                    mle_vals.append(parts["loss_mle"])
                if parts["loss_hrl"] is not None:
                    hrl_vals.append(parts["loss_hrl"])
                if parts["reward"] is not None:
                    rewards.append(parts["reward"])
            batch_loss = ad.mul(total, 1.0 / len(batch.examples))
            if not np.isfinite(batch_loss.data):
                log.error("non-finite loss at step %d; aborting with last good "
                          "parameters", step)
                store.load_snapshot(last_good)
                result.aborted = True
                break
            batch_loss.backward()
            if cfg.grad_clip is not None:
                clip_global_norm(store, cfg.grad_clip)
            adam_step(store, adam, lr=cfg.learning_rate)
            if rewards:
                baseline.update(float(np.mean(rewards)))
            step += 1
            row = {
                "step": step,
                "mu": mle_weight(step - 1, cfg.total_steps, cfg.mle_only),
                "loss_mle": float(np.mean(mle_vals)) if mle_vals else None,
                "loss_hrl": float(np.mean(hrl_vals)) if hrl_vals else None,
                "reward_mean": float(np.mean(rewards)) if rewards else None,
                "dev_bleu4": None, "dev_rouge2": None, "dev_rougeL": None,
            }
            if step % cfg.eval_every == 0 or step == cfg.total_steps:
                scores = evaluate()
                if scores:
                    row["dev_bleu4"] = scores["bleu4"]
                    row["dev_rouge2"] = scores["rouge2"]
                    row["dev_rougeL"] = scores["rougeL"]
                    tracked = scores["bleu4"] if cfg.reward_metric == "bleu4" \
                        else scores["rougeL"]
                    if tracked >= result.best_score:
                        result.best_score = tracked
                        result.best_params = store.snapshot()
                last_good = store.snapshot()
            result.history.append(row)
            if log_writer is not None:
                log_writer(row)
        if result.aborted:
            break
        epoch += 1
    if result.best_params is None:
        result.best_params = store.snapshot()
    return result
