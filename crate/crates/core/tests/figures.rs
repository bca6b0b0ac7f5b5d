use distill_core::figures::*;
use distill_core::measures::MeasureOptions;

fn table(id: FigureId, grid: Vec<f64>) -> Table {
    compute(&FigureSpec::with_grid(id, grid).unwrap(), &MeasureOptions::default()).unwrap()
}

#[test]
fn ids_round_trip() {
    for id in FigureId::ALL {
        assert_eq!(id.to_string().parse::<FigureId>().unwrap(), id);
    }
    assert!("5c".parse::<FigureId>().is_err());
    assert!(FigureSpec::with_grid(FigureId::F2a, vec![1.5]).is_err());
    assert!(FigureSpec::with_grid(FigureId::F4a, vec![0.0]).is_err());
    assert_eq!(FigureSpec::new(FigureId::F2a).grid.len(), 21);
}

#[test]
fn number_format_is_twelve_digits() {
    assert_eq!(format_number(0.3), "0.3");
    assert_eq!(format_number(0.1 + 0.2), "0.3");
    assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
    assert_eq!(format_number(-0.0), "0");
    assert_eq!(format_number(f64::INFINITY), "inf");
    assert_eq!(format_number(1.234e-9), "0.000000001234");
}

#[test]
fn depolarizing_curves_coincide() {
    let t = table(FigureId::F2a, vec![0.0, 0.4, 1.0]);
    for (i, p) in [0.0, 0.4, 1.0].into_iter().enumerate() {
        for col in ["epsilon_rob", "epsilon_weight", "epsilon_ns"] {
            let v = t.get(i, col).unwrap();
            assert!((v - 0.75 * p).abs() < 1e-6, "{col} at p = {p}: {v}");
        }
    }
    let csv = t.to_csv().unwrap();
    assert!(csv.starts_with("p,epsilon_rob,epsilon_rob_status,"));
    let row: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "0.4");
    assert_eq!(row[2], "valid");
    assert!((row[5].parse::<f64>().unwrap() - 0.3).abs() < 1e-6);
}

#[test]
fn floors_lie_below_ns_codes() {
    for id in [FigureId::F2b, FigureId::F2c] {
        let t = table(id, vec![0.3, 0.7]);
        for i in 0..2 {
            let ns = t.get(i, "epsilon_ns").unwrap();
            for col in ["epsilon_rob", "epsilon_weight"] {
                assert!(t.get(i, col).unwrap() <= ns + 1e-6, "{id} {col}");
            }
        }
    }
}

#[test]
fn magic_state_table() {
    let t = table(FigureId::F3b, vec![0.0, 0.5]);
    assert!(t.get(0, "weight").unwrap().abs() < 1e-6);
    assert!((t.get(0, "epsilon_rob").unwrap() - 0.1).abs() < 0.01);
    assert_eq!(t.rows[0][t.column("epsilon_eig_status").unwrap()].to_string(), "inapplicable");
    assert!((t.get(1, "robustness").unwrap() - 1.0).abs() < 1e-6);
    assert!((t.get(1, "epsilon_rob").unwrap() - 7.0 / 16.0).abs() < 1e-6);
    assert_eq!(t.rows[1].last().unwrap().to_string(), "true");
}

#[test]
fn gate_and_copy_tables() {
    let t = table(FigureId::F3a, vec![0.0]);
    let r = t.get(0, "robustness").unwrap();
    assert!((r - (4.0 - 2.0 * 2f64.sqrt())).abs() < 1e-6);
    let t = table(FigureId::F4b, vec![1e-3, 1e-2]);
    assert!(t.get(0, "n_rob").unwrap() > t.get(1, "n_rob").unwrap());
    assert!(t.get(0, "n_weight").unwrap() > t.get(1, "n_weight").unwrap());
}

#[test]
fn csv_is_deterministic() {
    let a = table(FigureId::F4a, vec![1e-4, 0.1]).to_csv().unwrap();
    let b = table(FigureId::F4a, vec![1e-4, 0.1]).to_csv().unwrap();
    assert_eq!(a, b);
}
