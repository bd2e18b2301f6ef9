"""The harness must be able to say "no": self-tests that break things.

A verifier that never fails is worthless.  Two falsification drills:
corrupt the alignment (wrong threshold shift) and watch the soundness
check produce a replayable counterexample; halve the noise (as if the
budget were doubled) and watch the Monte Carlo estimator flag outputs
whose empirical likelihood ratio exceeds epsilon.
"""

from gapsvt import (
    Mutation,
    SVT_GAP,
    TrialPlan,
    Workload,
    check_alignment_soundness,
    mc_privacy_estimate,
    replay_witness,
)

print("== drill 1: corrupted alignment ==")
plan = TrialPlan(SVT_GAP, trials=10**4, master_seed=7, mutation=Mutation.THRESHOLD_SHIFT)
report = check_alignment_soundness(plan)
print(f"verdict: {report.verdict} (found at trial {report.witness.trial_index})")
print(f"workload: {report.witness.workload['pairs']}, tape {report.witness.tape['per_query']}")
print(f"expected {report.witness.expected}")
print(f"got      {report.witness.got}")
print(f"witness replays from serialized inputs alone: {replay_witness(report.witness)}")
assert report.verdict == "fail"

print("\n== drill 2: noise scales from a doubled budget ==")
# three queries sized so the broken mechanism's ratio clearly exceeds eps
w = Workload.from_values([(5, 6), (5, 6), (8, 7)], threshold=4, k=1, epsilon=1.0)
clean = mc_privacy_estimate(SVT_GAP, w, samples=10**5, seed=21)
print(f"intact mechanism: {clean.verdict} (no output beats the Wilson margin)")
broken = mc_privacy_estimate(SVT_GAP, w, samples=10**6, seed=21, scale_epsilon_factor=2.0)
print(f"halved noise:     {broken.verdict}, flagged outputs:")
for key, cp, cq in broken.notes["flagged"][:5]:
    print(f"  {key!r}: {cp} vs {cq} counts per side")
assert broken.verdict == "fail"
print("\nboth drills failed exactly where they should")
