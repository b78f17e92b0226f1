import sys

from misre.cli import main

sys.exit(main())
