"""Regression workbench for predicting the share of bot accounts among a user's followees."""

__version__ = "0.1.0"
