import sys

from dpcnet.cli import main

sys.exit(main())
