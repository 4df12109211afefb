"""
Пути вывода: отчеты, CSV, WAV и лог-файлы.
"""
