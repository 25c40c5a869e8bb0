"""Counterfactual explanations for clustering models."""
