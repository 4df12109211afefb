"""
Общие помощники: проверка входов, случайные потоки, конвертация значений для отчетов.
"""
