import sys

from l2halo.cli import main

sys.exit(main())
