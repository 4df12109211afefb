# cli/commands/__init__.py
"""Подкоманды: один модуль на команду, каждая возвращает отчет или пути к файлам."""
