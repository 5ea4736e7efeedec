import sys

from sdir.cli import main

sys.exit(main())
