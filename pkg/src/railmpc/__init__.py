"""Learning-guided MPC for urban-rail train rescheduling."""

__version__ = "0.1.0"
