# sde/__init__.py
"""Расписания шума сдвинутых SDE и их гауссовы ядра возмущения."""
