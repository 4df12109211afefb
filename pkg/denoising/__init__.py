# denoising/__init__.py
"""Предобусловливание денойзера, функции потерь и аналитические оракулы."""
