#!/usr/bin/env python3
# The two-stage decoder: pick copy-vs-generate, then pick the node or word.
# Grammar masking zeroes illegal copies exactly; copy decay discourages
# emitting the same node twice in a row.

import numpy as np

from treecomment.corpus import build_vocab
from treecomment.decoder import DecoderConfig, TreeDecoder
from treecomment.encoder import EncoderConfig, TreeEncoder, hidden_matrix
from treecomment.params import ParamStore
from treecomment.parsers import parse_sql
from treecomment.trees import get_grammar

grammar = get_grammar("wikisql")
src_vocab = build_vocab([["select", "capacity", "stadium"]], min_freq=1)
tgt_vocab = build_vocab([["what", "is", "the", "of", "?"]], min_freq=1)

store = ParamStore(seed=1)
encoder = TreeEncoder(store, grammar, src_vocab, EncoderConfig(hidden_size=12))
decoder = TreeDecoder(store, grammar, tgt_vocab,
                      DecoderConfig(hidden_size=12, decay_factor=0.5))

tree = parse_sql("SELECT Capacity FROM table WHERE Stadium = 'Otkrytie Arena'")
enc = encoder.encode(tree)
mat = hidden_matrix(enc)
keep = decoder.copy_keep_mask(tree)

print("copyable nodes (grammar-available types with tokens):")
for n in tree.nodes:
    tag = "copyable" if keep[n.id] else "masked"
    print(f"  node {n.id} {n.type:<12} {str(list(n.tokens)):<24} {tag}")

state = decoder.initial_state(enc, tree)
state, out = decoder.step(state, mat, keep, prev_token_id=1)
print("\noperation distribution [copy, generate]:", np.round(out.op_probs.data, 3))
print("copy distribution:", np.round(out.copy_probs.data, 3))
print("masked probabilities are exactly zero:",
      bool(np.all(out.copy_probs.data[~keep] == 0.0)))

# after copying a node its decay jumps to 1 and then halves every step,
# scaling its future copy probability by (1 - decay)
copied = int(np.argmax(out.copy_probs.data))
from treecomment.decoder import decay_update
decay = decay_update(state.decay, copied, 0.5)
print(f"\ndecay after copying node {copied}:", decay)
for _ in range(2):
    decay = decay_update(decay, None, 0.5)
    print("next step decay:", decay)

# greedy decoding with untrained weights is noise, but the trace shows the
# machinery: per-step attention, operation choice, and the decay snapshot
trace = []
tokens = decoder.decode_greedy(enc, tree, max_len=4, trace=trace)
print("\nuntrained greedy output:", tokens)
for entry in trace:
    print(f"  step {entry['step']}: action={entry['action']} emitted={entry['emitted']}")

# sampled decoding records per-step log-probabilities for policy gradients
traj = decoder.decode_sample(enc, tree, np.random.default_rng(0))
print("\nsampled tokens:", traj.tokens)
print("trajectory log-probability:", round(traj.logprob(), 4))
