#!/usr/bin/env python3
# Evaluation metrics and the shaped per-step rewards built from them.

import math

from treecomment.metrics import bleu4, corpus_eval, rouge2, rougeL
from treecomment.training import quantize_reward, reward_function, shaped_rewards

cand = "what is the highest capacity for the stadium of otkrytie arena ?".split()
ref = "what is the maximum capacity of the otkrytie arena stadium ?".split()

print("candidate:", " ".join(cand))
print("reference:", " ".join(ref))
b = bleu4(cand, ref)
print(f"BLEU-4 {b.value:.4f}  (n-gram precisions: "
      f"{[round(p, 3) for p in b.components['p']]}, bp {b.components['bp']:.3f})")
print(f"ROUGE-2 {rouge2(cand, ref).value:.4f}")
print(f"ROUGE-L {rougeL(cand, ref).value:.4f}")

# brevity penalty: truncating the candidate is punished multiplicatively
for cut in (len(cand), 8, 5):
    score = bleu4(cand[:cut], ref)
    print(f"  candidate cut to {cut:>2} tokens -> BLEU-4 {score.value:.4f} "
          f"(bp {score.components['bp']:.3f})")

# sentence mode smooths the higher-order precisions so near misses still get
# signal; corpus mode pools raw counts (reports multiply by 100)
scores = corpus_eval([cand, ref], [ref, ref])
print("\ncorpus report:", {k: round(v * 100, 1) for k, v in scores.items()})

# the trainer's reward is the sentence metric split into per-step increments
# that telescope exactly to the final score
metric = reward_function("bleu4")
rewards = shaped_rewards(cand, ref, metric)
print("\nper-token shaped rewards:", [round(float(r), 4) for r in rewards])
print("sum of increments:", math.fsum(rewards))
print("final sentence reward:", quantize_reward(metric(cand, ref)))
print("bitwise equal:", math.fsum(rewards) == quantize_reward(metric(cand, ref)))
