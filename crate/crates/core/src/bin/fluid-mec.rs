fn main() {
    std::process::exit(fluid_mec::cli_main(std::env::args_os()));
}
