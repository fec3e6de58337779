"""Why prefer the generalized score test over the Wald test?

Both use the same point estimate and the same robust variance, but the
score statistic re-evaluates the variance under the null, which gives
it two finite-sample properties the Wald test lacks:

  1. (deterministic) the score statistic is strictly smaller than the
     Wald chi-square whenever the estimate is away from the null, and
     its confidence interval strictly contains the Wald interval -- on
     every dataset, not just on average;
  2. (statistical) its one-sided type I error sits at or below the
     nominal level in small samples where the Wald test overshoots.

This script verifies the deterministic ordering on simulated trials and
then measures both tests' type I error with a short Monte Carlo run.

Run:  python demos/score_vs_wald.py
"""

import numpy as np

from gscore import (
    CovariateSpec,
    Hypothesis,
    MethodSpec,
    ModelSpec,
    Scenario,
    analyze_trial,
    generate_trial,
    run_oc,
)

covariates = (CovariateSpec(kind="standard-normal"),) * 3
beta_w = (float(np.sqrt(np.log(2.0) ** 2 / 3)),) * 3
model = ModelSpec(family="bernoulli-logit", covariates=("W1", "W2", "W3"))

# ---------------------------------------------------------------------
# 1. One trial, side by side.
# ---------------------------------------------------------------------
scenario = Scenario(n=200, covariates=covariates, beta_W=beta_w,
                    beta_A=(-0.9355, -0.2224))
data = generate_trial(scenario, np.random.default_rng(3))
res = analyze_trial(data, model, Hypothesis(measure="difference"))
w, s = res.tests["wald"], res.tests["score"]
print(f"wald : stat = {w.statistic:.4f}, "
      f"CI ({w.ci[0]:+.4f}, {w.ci[1]:+.4f}), p = {w.p_value:.4f}")
print(f"score: stat = {s.statistic:.4f}, "
      f"CI ({s.ci[0]:+.4f}, {s.ci[1]:+.4f}), p = {s.p_value:.4f}")

# ---------------------------------------------------------------------
# 2. The ordering is not luck: it holds on every replication.
# ---------------------------------------------------------------------
rng = np.random.default_rng(4)
reps = 200
ordered = nested = 0
for _ in range(reps):
    d = generate_trial(scenario, rng)
    r = analyze_trial(d, model, Hypothesis(measure="difference"))
    w, s = r.tests["wald"], r.tests["score"]
    ordered += s.statistic < w.statistic
    nested += (s.ci[0] < w.ci[0]) and (s.ci[1] > w.ci[1])
print(f"\nover {reps} simulated trials: "
      f"score stat < wald stat in {ordered}/{reps}, "
      f"score CI contains wald CI in {nested}/{reps}")

# ---------------------------------------------------------------------
# 3. Type I error at the one-sided 2.5% level under a null scenario
#    (both intercepts equal, so the true marginal difference is 0).
# ---------------------------------------------------------------------
null_scenario = Scenario(n=100, covariates=covariates, beta_W=beta_w,
                         beta_A=(-0.9355, -0.9355))
methods = (MethodSpec(name="wald", test="wald", model=model),
           MethodSpec(name="score", test="score", model=model))
oc = run_oc(null_scenario, methods, reps=2000, seed=5)
print(f"\ntype I error at n = {null_scenario.n} "
      f"(nominal 0.025, {oc.reps} reps):")
for m in oc.methods:
    print(f"  {m.name:>5}: {m.rejection_rate:.4f} "
          f"(MC se {m.mc_se_rejection:.4f})")
print("the score test gives up a little power for this protection; "
      "see demos/operating_characteristics.py")
