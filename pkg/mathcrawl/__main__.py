from mathcrawl.cli import main

raise SystemExit(main())
