"""Trajectory-user linking with a trajectory hypergraph attention network
and a spatio-temporal LSTM branch."""

__version__ = "0.1.0"
