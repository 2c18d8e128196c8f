import sys

from surrex.cli import main

sys.exit(main())
