//! Cohen's kappa between two annotators judging whether inferred
//! personalities match review texts.
//!
//! ```text
//! cargo run --example annotation_agreement -- yes,no,yes,not-sure yes,no,no,not-sure
//! ```

use pncf::evaluation::{cohen_kappa, Judgement};

fn parse(list: &str) -> pncf::Result<Vec<Judgement>> {
    list.split(',').map(|s| s.trim().parse()).collect()
}

fn main() -> pncf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (a, b) = if args.len() == 2 {
        (parse(&args[0])?, parse(&args[1])?)
    } else {
        use Judgement::*;
        (
            vec![Yes, Yes, Yes, No, Yes, NotSure, Yes, No, Yes, Yes],
            vec![Yes, Yes, No, No, Yes, NotSure, Yes, No, Yes, NotSure],
        )
    };
    let agree = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    let yes = a.iter().filter(|&&j| j == Judgement::Yes).count();
    println!("{} items, raw agreement {:.2}, annotator A says yes to {:.0}%", a.len(), agree as f64 / a.len() as f64, 100.0 * yes as f64 / a.len() as f64);
    println!("Cohen's kappa {:.4}", cohen_kappa(&a, &b)?);
    Ok(())
}
