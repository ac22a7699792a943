from sclockdown.cli import main

main()
