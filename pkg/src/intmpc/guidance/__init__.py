"""Learned velocity-reference guidance: observations, policy, reward and SAC."""
