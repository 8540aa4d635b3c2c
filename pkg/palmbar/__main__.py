"""python -m palmbar"""
import sys

from palmbar.cli.main import main

sys.exit(main())
