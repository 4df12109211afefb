# audio/__init__.py
"""STFT, амплитудное сжатие и WAV-ввод/вывод."""
