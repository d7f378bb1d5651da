fn main() {
    std::process::exit(seller_select::cli::run(std::env::args_os()));
}
