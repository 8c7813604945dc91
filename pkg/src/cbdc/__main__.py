import sys

from cbdc.cli import main

sys.exit(main())
