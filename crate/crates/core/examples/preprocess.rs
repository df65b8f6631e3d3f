//! Raw Dunnhumby-layout CSV to a coded dataset file and its statistics.

use std::fs;

use bdhh::dataio::{load_transactions, preprocess, Dataset, DatasetFormat, PreprocessConfig};
use bdhh::synthetic::{planted_records, PlantedConfig};

fn main() -> bdhh::Result<()> {
    let dir = tempfile::tempdir()?;
    let cfg = PlantedConfig { users: 6, baskets_per_user: 4, items: 20, set_size: 3, noise_items: 1, ..PlantedConfig::default() };
    let records = planted_records(&cfg);

    let mut tx = String::from("household_key,BASKET_ID,DAY,PRODUCT_ID,QUANTITY,SALES_VALUE,STORE_ID\n");
    let mut products = std::collections::BTreeMap::new();
    for r in &records {
        let basket = format!("{}{:03}", &r.user_id[1..], r.day);
        tx.push_str(&format!("{},{basket},{},{},1,{:.2},1\n", r.user_id, r.day + 1, r.item_id, r.price));
        products.insert(r.item_id.clone(), r.category.clone());
    }
    let mut prod = String::from("PRODUCT_ID,DEPARTMENT,COMMODITY_DESC\n");
    for (id, cat) in &products {
        prod.push_str(&format!("{id},GROCERY,{cat}\n"));
    }
    let input = dir.path().join("transaction_data.csv");
    fs::write(&input, tx)?;
    fs::write(dir.path().join("product.csv"), prod)?;

    let pre = PreprocessConfig { min_item_count: 1, max_baskets_per_user: 0, ..PreprocessConfig::dunnhumby() };
    let ds = preprocess(load_transactions(&input, &DatasetFormat::Dunnhumby)?, &pre)?;
    println!("{}", serde_json::to_string_pretty(&ds.stats()).expect("json"));

    let out = dir.path().join("dataset.tsv");
    ds.save(&out)?;
    let text = fs::read_to_string(&out)?;
    for line in text.lines().take(8) {
        println!("{line}");
    }
    assert_eq!(Dataset::load(&out)?, ds);
    println!("... {} lines, reload ok", text.lines().count());
    Ok(())
}
