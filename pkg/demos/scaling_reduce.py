"""Dimensionless groups of a laboratory flow and the reduced coefficients."""
from granflow.scaling import PhysicalScales, format_report, redimensionalize, reduce

scales = PhysicalScales(L=0.1, U=0.1, T=0.01, d=0.01, g=10.0)
red = reduce(scales)
print(format_report(red.report, red), end="")
back = redimensionalize(red.report, scales.L, scales.g)
print("recovered:", {k: back[k] for k in ("U", "T", "d", "phi_max")})
