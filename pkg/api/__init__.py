"""API 包"""

