"""seglab: a numerical laboratory for segregated two-component condensates.

Builds interface layer profiles, the scalar limit problem, the matched
two-component ansatz, and the weighted-norm linear estimate diagnostics, and
validates the ansatz by Newton continuation in the coupling strength.
"""

__version__ = "0.1.0"
