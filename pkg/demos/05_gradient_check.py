"""Verify the analytic backward pass against finite differences.

The backward pass is hand-derived (softmax, the two position-bias
terms, the shared projections, and scatter-adds into both table sets).
Each check builds a random instance, computes analytic gradients for
all eleven parameter tensors, then re-derives each one with central
finite differences on the scalar loss sum(z**2) / 2.
"""

import sphere_attn as sa

print("single instance, per-parameter relative errors:")
errors = sa.gradient_check(seed=0, n_tokens=6, num_heads=2, head_dim=2)
for name, err in sorted(errors.items()):
    print(f"  {name:12s} {err:.3e}")

print("\n15-instance suite (varied sizes, heads, table lengths):")
result = sa.gradient_check_suite(trials=15, base_seed=0)
for name, err in sorted(result["per_parameter_max_rel_error"].items()):
    print(f"  {name:12s} {err:.3e}")
print(f"max over all parameters: {result['max_rel_error']:.3e} "
      f"(tolerance {result['tolerance']:.0e}) -> passed={result['passed']}")
print(f"elapsed: {result['elapsed_s']:.1f}s for {result['trials']} instances")
