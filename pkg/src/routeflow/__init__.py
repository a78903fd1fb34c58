"""routeflow: a CVRP toolkit pairing a flow-trained attention policy with a
decomposition-augmented genetic-search expert, exact small-instance oracles,
and a benchmark CLI."""

__version__ = "0.1.0"
