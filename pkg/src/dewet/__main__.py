import sys

from dewet.cli import main

sys.exit(main())
