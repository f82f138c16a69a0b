import sys

from commotions.cli import main

sys.exit(main())
