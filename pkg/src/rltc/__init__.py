"""Trust-learning consensus simulator."""
