#!/usr/bin/env python3
"""
Convenience wrapper for running cascade-router directly from source tree.
"""
import sys

from cascade_router.__main__ import main

if __name__ == '__main__':
    sys.exit(main())
