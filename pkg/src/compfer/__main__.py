import sys

from compfer.cli import main

sys.exit(main())
