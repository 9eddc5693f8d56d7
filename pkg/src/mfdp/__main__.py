import sys

from mfdp.cli import main

sys.exit(main())
