"""smio — set-membership state and unknown-input estimation for switched
linear discrete-time systems under bounded noise and sparse data-injection
attacks.

The library runs a bank of mode-matched observers (one per attack-location
hypothesis), produces guaranteed norm-ball estimates of the state and the
unknown input, and eliminates hypotheses whose residual provably exceeds
what any admissible noise could explain.
"""

__version__ = "0.1.0"
