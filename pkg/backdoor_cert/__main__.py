from backdoor_cert.main import main

if __name__ == "__main__":
    raise SystemExit(main())
