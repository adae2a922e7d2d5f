fn main() {
    println!("treecalc: placeholder");
}
