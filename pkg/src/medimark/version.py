# This file is automatically generated by medimark's setup.py.
short_version = '1.0.0'
version = '1.0.0'
release = True
