from afgan.cli import main

main()
