fn main() {
    std::process::exit(gdt_cli::commands::run(std::env::args_os()));
}
