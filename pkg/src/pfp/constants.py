"""Numerical guard constants shared by tensors and kernels."""

# Absolute slack band for second-raw-moment -> variance conversion.
EPS_REP = 1e-9

# Spread threshold below which activation kernels switch from the
# erf/phi closed forms to their deterministic limits (avoids 0/0 in
# mu/sigma while staying far below any meaningful variance).
EPS_ACT = 1e-12
