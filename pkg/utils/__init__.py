"""Refuge epidemic simulator: beets, aphid vectors and their predators on a heterogeneous field."""
