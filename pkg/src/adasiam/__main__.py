import sys

from .eval_cli import main

sys.exit(main())
