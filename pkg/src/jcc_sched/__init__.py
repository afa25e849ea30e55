"""Day-ahead HVAC scheduling on radial networks under renewable uncertainty.

The package builds a single conic program per day: building thermal dynamics
and network power flow are linear, branch apparent-power caps are second-order
cones, and chance constraints on voltages and flows are enforced robustly over
a data-driven uncertainty set (learned one-class classifier, box, convex hull,
or a Gaussian per-constraint bound).
"""

__version__ = "0.1.0"
