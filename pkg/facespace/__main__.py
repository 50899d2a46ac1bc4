from facespace.cli import main

import sys

sys.exit(main())
