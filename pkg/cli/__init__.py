# cli/__init__.py
"""Командная строка: разбор строк спецификаций, отчеты, подкоманды."""
