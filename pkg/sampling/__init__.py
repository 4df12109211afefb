# sampling/__init__.py
