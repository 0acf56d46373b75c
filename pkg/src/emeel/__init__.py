"""Pauli noise learning with Bell pairs and auxiliary-noise mitigation.

Modules
-------
pauli       Pauli labels, Clifford maps, gate periods and orbits.
channels    Pauli channels, SPAM models and the SPAM budget.
sim         Pauli-frame Monte Carlo of the learning circuits and exact oracles.
estimation  Decay fitting, EMEEL combination, overheads and correlations.
hypothesis  The channel-distinguishing game.
workflows   Config-driven pipelines used by the command line tool.
"""

__version__ = "0.1.0"
